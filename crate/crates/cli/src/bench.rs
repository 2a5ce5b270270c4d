//! End-to-end runs: `pipeline` for one configured case, `bench` for a sweep.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use cps_core::calib::CalibConfig;
use cps_core::exec;
use cps_core::io::load_json;
use cps_core::io::pfm::{read_vector_pfm, write_vector_pfm};
use cps_core::pipeline::{run_pipeline, EvaluationReport, PipelineConfig};
use cps_core::rng::{derive_seed, tags};
use cps_core::solver::SolverConfig;
use cps_core::synth::geometry::{perturb_normals, Geometry};
use cps_core::synth::sweep::{self, synth_sweep, CaseRecord, SweepConfig, SweepManifest};

use crate::stages::{standard_scene, AblationArg, AlbedoArg, AxisArg};

// ---------------------------------------------------------------------------
// pipeline

#[derive(Args)]
pub struct PipelineArgs {
    /// Run description (TOML). Relative paths inside the file resolve
    /// against the file's own directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for every artifact of the run.
    #[arg(long)]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver ablation override.
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
}

fn rebase(path: &mut PathBuf, base: &Path) {
    if !path.as_os_str().is_empty() && path.is_relative() {
        *path = base.join(&*path);
    }
}

/// Resolve every path in the config against the config file's directory.
fn rebase_config(config: &mut PipelineConfig, base: &Path) {
    rebase(&mut config.image, base);
    rebase(&mut config.proxy_normals, base);
    rebase(&mut config.proxy_positions, base);
    for p in [
        &mut config.sample_mask,
        &mut config.decrosstalk,
        &mut config.gt_normals,
        &mut config.gt_positions,
        &mut config.gt_rig,
    ]
    .into_iter()
    .flatten()
    {
        rebase(p, base);
    }
}

pub fn pipeline(args: &PipelineArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config: PipelineConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    rebase_config(&mut config, base);
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(ablation) = args.ablation {
        config.solver.ablation = ablation.into();
    }

    let outcome = run_pipeline(&config, &args.out)?;
    if let Some(mean) = outcome.report.mean_normal_error_degrees {
        println!("mean normal error: {mean:.3} deg");
    }
    if let Some(e) = outcome.report.relative_geometry_error {
        println!("relative geometry error: {e:.5}");
    }
    println!(
        "unsolved pixels: {}; wrote {}",
        outcome.report.unsolved_pixels,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Args)]
pub struct BenchArgs {
    /// Existing case tree (a directory holding `manifest.json` from
    /// `cps synth`). When absent, cases are rendered under OUT/cases
    /// using --axis/--resolution/--albedo/--noise-sigma.
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Directory receiving per-point runs, `results.csv`, `summary.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "distance")]
    axis: AxisArg,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, value_enum, default_value = "two-tone")]
    albedo: AlbedoArg,
    /// Smooth normal noise (RMS degrees) perturbing the proxy at each point.
    #[arg(long, default_value_t = 5.0)]
    proxy_noise_degrees: f64,
    /// Calibration iterations per light.
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "full")]
    ablation: AblationArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run sweep points concurrently instead of one after another.
    /// Per-point seeds keep every point's result identical either way.
    #[arg(long)]
    parallel_points: bool,
}

#[derive(Debug, Serialize)]
struct Row {
    label: String,
    /// Swept-axis value of this point.
    value: f64,
    status: &'static str,
    #[serde(flatten)]
    report: Option<EvaluationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

#[derive(Debug, Serialize)]
struct BenchSummary {
    axis: sweep::SweepAxis,
    resolution: usize,
    points: usize,
    failures: usize,
    /// Mean of the per-point mean normal errors over successful points.
    mean_normal_error_degrees: Option<f64>,
    /// Mean relative light-position error over successful points.
    mean_light_relative_error: Option<f64>,
    rows: Vec<Row>,
}

/// Run one sweep point: derive a perturbed proxy from the case's ground
/// truth, then run the full pipeline against the case artifacts.
fn run_point(args: &BenchArgs, root: &Path, index: usize, record: &CaseRecord) -> Result<EvaluationReport> {
    let point_dir = args.out.join("points").join(&record.case.label);
    fs::create_dir_all(&point_dir)?;

    let gt_normals = read_vector_pfm(root.join(&record.gt_normals))?;
    let gt_positions = read_vector_pfm(root.join(&record.gt_positions))?;
    let pitch = 1.0 / gt_normals.width() as f64;
    let proxy = perturb_normals(
        &Geometry {
            normals: gt_normals,
            positions: gt_positions,
            pitch,
        },
        args.proxy_noise_degrees,
        derive_seed(args.seed, tags::PROXY_NOISE, index as u64),
    )?;
    let proxy_normals = point_dir.join("proxy_normals.pfm");
    let proxy_positions = point_dir.join("proxy_positions.pfm");
    write_vector_pfm(&proxy_normals, &proxy.normals)?;
    write_vector_pfm(&proxy_positions, &proxy.positions)?;

    let config = PipelineConfig {
        image: root.join(&record.image),
        proxy_normals,
        proxy_positions,
        sample_mask: Some(root.join(&record.sample_mask)),
        gt_normals: Some(root.join(&record.gt_normals)),
        gt_positions: Some(root.join(&record.gt_positions)),
        gt_rig: Some(root.join(&record.rig)),
        seed: derive_seed(args.seed, tags::SWEEP, index as u64),
        calib: CalibConfig {
            iterations: args.iterations,
            ..CalibConfig::default()
        },
        solver: SolverConfig {
            ablation: args.ablation.into(),
            ..SolverConfig::default()
        },
        ..PipelineConfig::default()
    };
    let outcome = run_pipeline(&config, &point_dir.join("run"))?;
    Ok(outcome.report)
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let (root, manifest): (PathBuf, SweepManifest) = match &args.cases {
        Some(dir) => {
            let manifest = load_json(dir.join(sweep::files::MANIFEST))
                .with_context(|| format!("reading sweep manifest under {}", dir.display()))?;
            (dir.clone(), manifest)
        }
        None => {
            let dir = args.out.join("cases");
            let (geometry, albedo) = standard_scene(args.resolution, args.seed, args.albedo)?;
            let cfg = SweepConfig {
                noise_sigma: args.noise_sigma,
                seed: args.seed,
                sample_mask_fraction: 0.5,
            };
            let manifest = synth_sweep(&dir, &geometry, &albedo, args.axis.into(), &cfg)?;
            (dir, manifest)
        }
    };
    if manifest.cases.is_empty() {
        bail!("sweep has no cases");
    }

    let run_one = |k: usize| -> Row {
        let record = &manifest.cases[k];
        match run_point(args, &root, k, record) {
            Ok(report) => Row {
                label: record.case.label.clone(),
                value: record.value,
                status: "ok",
                report: Some(report),
                message: None,
            },
            Err(e) => Row {
                label: record.case.label.clone(),
                value: record.value,
                status: "error",
                report: None,
                message: Some(format!("{e:#}")),
            },
        }
    };
    let rows: Vec<Row> = if args.parallel_points {
        exec::map_range(manifest.cases.len(), run_one)
    } else {
        (0..manifest.cases.len()).map(run_one).collect()
    };

    for row in &rows {
        match &row.report {
            Some(r) => println!(
                "{} (value {}): mean normal error {} deg",
                row.label,
                row.value,
                r.mean_normal_error_degrees
                    .map(|m| format!("{m:.3}"))
                    .unwrap_or_else(|| "n/a".into()),
            ),
            None => println!(
                "{} (value {}): FAILED: {}",
                row.label,
                row.value,
                row.message.as_deref().unwrap_or("unknown error"),
            ),
        }
    }

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("results.csv"), results_csv(&rows))?;
    let ok = |f: &dyn Fn(&EvaluationReport) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.report.as_ref().and_then(f))
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };
    let summary = BenchSummary {
        axis: manifest.axis,
        resolution: manifest.resolution,
        points: rows.len(),
        failures: rows.iter().filter(|r| r.report.is_none()).count(),
        mean_normal_error_degrees: ok(&|r| r.mean_normal_error_degrees),
        mean_light_relative_error: ok(&|r| {
            r.light_errors
                .as_ref()
                .map(|e| e.iter().map(|l| l.relative).sum::<f64>() / 3.0)
        }),
        rows,
    };
    cps_core::io::save_json(args.out.join("summary.json"), &summary)?;
    println!(
        "{} points, {} failed; wrote {}",
        summary.points,
        summary.failures,
        args.out.display()
    );
    Ok(())
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

fn results_csv(rows: &[Row]) -> String {
    let mut out = String::from(
        "label,value,status,mean_normal_error_degrees,lit_mean_normal_error_degrees,\
         light1_relative,light1_angular_degrees,light2_relative,light2_angular_degrees,\
         light3_relative,light3_angular_degrees,relative_geometry_error,unsolved_pixels,\
         integrated_components,dropped_pixels,message\n",
    );
    for row in rows {
        let r = row.report.as_ref();
        let lights = r.and_then(|r| r.light_errors.as_ref());
        let mut fields = vec![
            row.label.clone(),
            format!("{}", row.value),
            row.status.to_string(),
            csv_opt(r.and_then(|r| r.mean_normal_error_degrees)),
            csv_opt(r.and_then(|r| r.lit_mean_normal_error_degrees)),
        ];
        for i in 0..3 {
            fields.push(csv_opt(lights.map(|l| l[i].relative)));
            fields.push(csv_opt(lights.map(|l| l[i].angular_degrees)));
        }
        fields.push(csv_opt(r.and_then(|r| r.relative_geometry_error)));
        fields.push(r.map(|r| format!("{}", r.unsolved_pixels)).unwrap_or_default());
        fields.push(r.map(|r| format!("{}", r.integrated_components)).unwrap_or_default());
        fields.push(r.map(|r| format!("{}", r.dropped_pixels)).unwrap_or_default());
        fields.push(match &row.message {
            Some(m) => format!("\"{}\"", m.replace('"', "\"\"").replace('\n', " ")),
            None => String::new(),
        });
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
