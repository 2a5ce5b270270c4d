//! Stage subcommands: one focused command per reconstruction step.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::Serialize;

use cps_core::calib::{calibrate_all, CalibConfig};
use cps_core::io::{
    load_image_png, load_json, load_mask_png, read_scalar_pfm, read_vector_pfm, save_json,
    save_preview_png, write_scalar_pfm, write_vector_pfm, MatrixFile, RigFile,
};
use cps_core::mesh::export_mesh;
use cps_core::metrics::{
    default_face_center, geometry_error, light_position_errors, normal_error, LightPositionError,
};
use cps_core::pipeline::files;
use cps_core::solver::{solve, Ablation, SolverConfig};
use cps_core::synth::geometry::{bumpy_cap, disc_albedo, uniform_albedo, Geometry};
use cps_core::synth::sweep::{synth_sweep, SweepAxis, SweepConfig};
use cps_core::{decrosstalk, integrate, ScalarMap, VectorMap};

/// Swept rig/degradation parameter, mirrored locally for flag parsing.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Distance,
    Elevation,
    Anisotropy,
    Crosstalk,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Distance => SweepAxis::Distance,
            AxisArg::Elevation => SweepAxis::Elevation,
            AxisArg::Anisotropy => SweepAxis::Anisotropy,
            AxisArg::Crosstalk => SweepAxis::Crosstalk,
        }
    }
}

/// Energy terms used by the chromaticity solver.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationArg {
    Consensus,
    ConsensusSimilarity,
    Full,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Consensus => Ablation::Consensus,
            AblationArg::ConsensusSimilarity => Ablation::ConsensusSimilarity,
            AblationArg::Full => Ablation::Full,
        }
    }
}

/// Albedo layout of the synthetic target.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlbedoArg {
    /// Warm disc on a cool surround; exercises spatially varying albedo.
    TwoTone,
    /// One albedo everywhere.
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeshFormatArg {
    Obj,
    Ply,
    Off,
}

/// Load an RGB image by extension: `.pfm` is read as stored (linear),
/// `.png` is decoded and linearized with the given gamma.
pub fn load_image(path: &Path, gamma: f64) -> Result<VectorMap> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let map = match ext.as_deref() {
        Some("pfm") => read_vector_pfm(path),
        Some("png") => load_image_png(path, gamma),
        _ => bail!(
            "unsupported image extension for {}: use .pfm or .png",
            path.display()
        ),
    };
    map.with_context(|| format!("loading image {}", path.display()))
}

fn load_vectors(path: &Path, what: &str) -> Result<VectorMap> {
    read_vector_pfm(path).with_context(|| format!("loading {what} {}", path.display()))
}

/// The standard benchmark target: a bumpy hemisphere spanning the unit
/// footprint. Hemisphere depth keeps the radial light distance observable
/// through inverse-square falloff, and the seeded bumps provide the normal
/// diversity that calibration and the solver need.
pub fn standard_scene(resolution: usize, seed: u64, albedo: AlbedoArg) -> Result<(Geometry, VectorMap)> {
    let geometry = bumpy_cap(resolution, 0.55, 12, 0.05, seed)?;
    let albedo = match albedo {
        AlbedoArg::TwoTone => disc_albedo(
            &geometry.normals,
            0.28,
            Vector3::new(0.80, 0.55, 0.45),
            Vector3::new(0.50, 0.55, 0.65),
        ),
        AlbedoArg::Uniform => uniform_albedo(&geometry.normals, Vector3::new(0.9, 0.75, 0.6)),
    };
    Ok((geometry, albedo))
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
pub struct SynthArgs {
    /// Directory receiving one subdirectory per case plus `manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// Which parameter the cases sweep.
    #[arg(long, value_enum, default_value = "distance")]
    axis: AxisArg,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian sensor-noise sigma added after exposure scaling.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Side fraction of the central square written as the sampling mask.
    #[arg(long, default_value_t = 0.5)]
    sample_fraction: f64,
    #[arg(long, value_enum, default_value = "two-tone")]
    albedo: AlbedoArg,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let (geometry, albedo) = standard_scene(args.resolution, args.seed, args.albedo)?;
    let cfg = SweepConfig {
        noise_sigma: args.noise_sigma,
        seed: args.seed,
        sample_mask_fraction: args.sample_fraction,
    };
    let manifest = synth_sweep(&args.out, &geometry, &albedo, args.axis.into(), &cfg)?;
    println!(
        "wrote {} cases at {}x{} under {}",
        manifest.cases.len(),
        args.resolution,
        args.resolution,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// decrosstalk

#[derive(Args)]
pub struct DecrosstalkArgs {
    #[command(subcommand)]
    command: DecrosstalkCommand,
}

#[derive(Subcommand)]
enum DecrosstalkCommand {
    /// Estimate the correction from three single-light white-target captures.
    Estimate {
        /// Capture lit by the red light only.
        #[arg(long)]
        under_red: PathBuf,
        /// Capture lit by the green light only.
        #[arg(long)]
        under_green: PathBuf,
        /// Capture lit by the blue light only.
        #[arg(long)]
        under_blue: PathBuf,
        /// Output matrix (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Gamma used to linearize PNG inputs.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Left-multiply a stored correction into an image.
    Apply {
        /// Correction matrix (JSON) from `estimate`.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Corrected image (PFM).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
}

pub fn decrosstalk(args: &DecrosstalkArgs) -> Result<()> {
    match &args.command {
        DecrosstalkCommand::Estimate {
            under_red,
            under_green,
            under_blue,
            out,
            gamma,
        } => {
            let r = load_image(under_red, *gamma)?;
            let g = load_image(under_green, *gamma)?;
            let b = load_image(under_blue, *gamma)?;
            let matrix = decrosstalk::estimate(&r, &g, &b)?;
            save_json(out, &MatrixFile::from_matrix(&matrix))?;
            println!("wrote {}", out.display());
            for row in 0..3 {
                println!(
                    "  [{:+.6} {:+.6} {:+.6}]",
                    matrix[(row, 0)],
                    matrix[(row, 1)],
                    matrix[(row, 2)]
                );
            }
        }
        DecrosstalkCommand::Apply {
            matrix,
            image,
            out,
            gamma,
        } => {
            let file: MatrixFile = load_json(matrix)?;
            let input = load_image(image, *gamma)?;
            let (corrected, clamped) = decrosstalk::apply(&file.matrix(), &input);
            write_vector_pfm(out, &corrected)?;
            println!("wrote {} ({clamped} negative values clamped)", out.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    image: PathBuf,
    /// Proxy normal map (PFM).
    #[arg(long)]
    proxy_normals: PathBuf,
    /// Proxy per-pixel scene positions (PFM).
    #[arg(long)]
    proxy_positions: PathBuf,
    /// PNG mask restricting the voting pixels; defaults to every valid pixel.
    #[arg(long)]
    sample_mask: Option<PathBuf>,
    /// Directory receiving `calibration.json` and `rig.json`.
    #[arg(long)]
    out: PathBuf,
    /// Sampled quadruplets per light.
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    /// Inlier threshold on the voting residual.
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
    /// Half-angle of the hypothesis plausibility cone, degrees.
    #[arg(long, default_value_t = 15.0)]
    eta_degrees: f64,
    /// Upper bound on the number of voting pixels per light.
    #[arg(long, default_value_t = 5000)]
    voting_limit: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let image = load_image(&args.image, args.gamma)?;
    let normals = load_vectors(&args.proxy_normals, "proxy normals")?;
    let positions = load_vectors(&args.proxy_positions, "proxy positions")?;
    let mask = match &args.sample_mask {
        Some(path) => {
            let (mask, w, h) = load_mask_png(path)
                .with_context(|| format!("loading sample mask {}", path.display()))?;
            if (w, h) != (image.width(), image.height()) {
                bail!(
                    "sample mask is {w}x{h} but the image is {}x{}",
                    image.width(),
                    image.height()
                );
            }
            mask
        }
        None => image.mask().to_vec(),
    };
    let cfg = CalibConfig {
        iterations: args.iterations,
        tau: args.tau,
        eta_degrees: args.eta_degrees,
        voting_limit: args.voting_limit,
        seed: args.seed,
        ..CalibConfig::default()
    };
    let calibration = calibrate_all(&image, &normals, &positions, &mask, &cfg)?;

    fs::create_dir_all(&args.out)?;
    save_json(args.out.join(files::CALIBRATION), &calibration)?;
    save_json(
        args.out.join(files::RIG),
        &RigFile::new(calibration.rig.clone()),
    )?;
    for light in &calibration.lights {
        let p = calibration.rig.lights[light.light_index].position;
        println!(
            "light {}: position [{:+.4} {:+.4} {:+.4}], {} inliers, {} hypotheses kept",
            light.light_index,
            p.x,
            p.y,
            p.z,
            light.diagnostics.vanilla_inliers,
            light.diagnostics.kept_after_filter,
        );
    }
    println!("wrote {}", args.out.join(files::CALIBRATION).display());
    Ok(())
}

// ---------------------------------------------------------------------------
// reconstruct

#[derive(Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    image: PathBuf,
    /// Light rig (JSON), calibrated or ground truth.
    #[arg(long)]
    rig: PathBuf,
    /// Per-pixel scene positions (PFM) for near-light shading.
    #[arg(long)]
    positions: PathBuf,
    /// Proxy normal map (PFM); required by the full energy.
    #[arg(long)]
    proxy_normals: Option<PathBuf>,
    /// Directory receiving normal/albedo/chromaticity maps and a preview.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    ablation: AblationArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

pub fn reconstruct(args: &ReconstructArgs) -> Result<()> {
    let image = load_image(&args.image, args.gamma)?;
    let rig: RigFile = load_json(&args.rig)?;
    let positions = load_vectors(&args.positions, "positions")?;
    let proxy = match &args.proxy_normals {
        Some(path) => Some(load_vectors(path, "proxy normals")?),
        None => None,
    };
    let cfg = SolverConfig {
        ablation: args.ablation.into(),
        seed: args.seed,
        ..SolverConfig::default()
    };
    let recon = solve(&image, &rig.rig, &positions, proxy.as_ref(), &cfg)?;

    fs::create_dir_all(&args.out)?;
    write_vector_pfm(args.out.join(files::NORMALS), &recon.normals)?;
    write_vector_pfm(args.out.join(files::ALBEDO), &recon.albedo)?;
    write_vector_pfm(args.out.join(files::CHROMATICITY), &recon.chromaticity)?;
    let mut preview = recon.normals.clone();
    for i in 0..preview.len() {
        let (x, y) = preview.coords(i);
        let n = preview.data()[i];
        preview.set(x, y, (n + Vector3::new(1.0, 1.0, 1.0)) * 0.5);
    }
    save_preview_png(args.out.join(files::NORMALS_PREVIEW), &preview, 1.0)?;
    println!(
        "solved {} pixels ({} unsolved); wrote {}",
        recon.normals.valid_count(),
        recon.unsolved_pixels,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// integrate

#[derive(Args)]
pub struct IntegrateArgs {
    /// Normal map (PFM) to integrate.
    #[arg(long)]
    normals: PathBuf,
    /// Directory receiving `depth.pfm` and the mesh.
    #[arg(long)]
    out: PathBuf,
    /// Scene distance between adjacent pixels; defaults to 1 / image width.
    #[arg(long)]
    pixel_pitch: Option<f64>,
    #[arg(long, value_enum, default_value = "obj")]
    mesh_format: MeshFormatArg,
}

pub fn integrate(args: &IntegrateArgs) -> Result<()> {
    let normals = load_vectors(&args.normals, "normals")?;
    let pitch = args.pixel_pitch.unwrap_or(1.0 / normals.width() as f64);
    let result = integrate::integrate_detailed(&normals, pitch)?;

    fs::create_dir_all(&args.out)?;
    write_scalar_pfm(args.out.join(files::DEPTH), &result.depth)?;
    let mesh_path = match args.mesh_format {
        MeshFormatArg::Obj => Some(args.out.join("mesh.obj")),
        MeshFormatArg::Ply => Some(args.out.join("mesh.ply")),
        MeshFormatArg::Off => None,
    };
    if let Some(path) = &mesh_path {
        export_mesh(path, &result.depth, Some(&normals), pitch)?;
    }
    println!(
        "integrated {} components ({} pixels dropped); wrote {}",
        result.components,
        result.dropped_pixels,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    /// Estimated normal map (PFM); requires --gt-normals.
    #[arg(long, requires = "gt_normals")]
    normals: Option<PathBuf>,
    #[arg(long)]
    gt_normals: Option<PathBuf>,
    /// Optional per-pixel angular-error map output (PFM).
    #[arg(long)]
    error_map: Option<PathBuf>,
    /// Estimated rig (JSON); requires --gt-rig and --gt-positions.
    #[arg(long, requires = "gt_rig")]
    rig: Option<PathBuf>,
    #[arg(long)]
    gt_rig: Option<PathBuf>,
    /// Estimated depth (PFM); requires --gt-positions.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Ground-truth positions (PFM): anchors light errors, z is depth truth.
    #[arg(long)]
    gt_positions: Option<PathBuf>,
    /// Report destination (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    mean_normal_error_degrees: Option<f64>,
    light_errors: Option<[LightPositionError; 3]>,
    relative_geometry_error: Option<f64>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut report = EvalReport {
        mean_normal_error_degrees: None,
        light_errors: None,
        relative_geometry_error: None,
    };
    let gt_positions = match &args.gt_positions {
        Some(path) => Some(load_vectors(path, "ground-truth positions")?),
        None => None,
    };

    if let (Some(est), Some(gt)) = (&args.normals, &args.gt_normals) {
        let est = load_vectors(est, "normals")?;
        let gt = load_vectors(gt, "ground-truth normals")?;
        let errors = normal_error(&est, &gt)?;
        if let Some(path) = &args.error_map {
            write_scalar_pfm(path, &errors.map)?;
        }
        println!("mean normal error: {:.3} deg", errors.mean_degrees);
        report.mean_normal_error_degrees = Some(errors.mean_degrees);
    }

    if let (Some(est), Some(gt)) = (&args.rig, &args.gt_rig) {
        let anchor_map = gt_positions
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("--rig evaluation needs --gt-positions as anchor"))?;
        let est: RigFile = load_json(est)?;
        let gt: RigFile = load_json(gt)?;
        let errors = light_position_errors(&est.rig, &gt.rig, &default_face_center(anchor_map)?)?;
        for (i, e) in errors.iter().enumerate() {
            println!(
                "light {i}: relative error {:.4}, angular error {:.3} deg",
                e.relative, e.angular_degrees
            );
        }
        report.light_errors = Some(errors);
    }

    if let Some(depth) = &args.depth {
        let gtp = gt_positions
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("--depth evaluation needs --gt-positions"))?;
        let est = read_scalar_pfm(depth)
            .with_context(|| format!("loading depth {}", depth.display()))?;
        let mut gt_depth = ScalarMap::filled(gtp.width(), gtp.height(), 0.0);
        for i in 0..gtp.len() {
            let (x, y) = gt_depth.coords(i);
            gt_depth.set(x, y, gtp.data()[i].z);
            gt_depth.set_valid(x, y, gtp.is_valid(i));
        }
        let e = geometry_error(&est, &gt_depth)?;
        println!("relative geometry error: {:.5}", e);
        report.relative_geometry_error = Some(e);
    }

    if report.mean_normal_error_degrees.is_none()
        && report.light_errors.is_none()
        && report.relative_geometry_error.is_none()
    {
        bail!("nothing to evaluate: pass --normals/--gt-normals, --rig/--gt-rig, or --depth");
    }
    save_json(&args.out, &report)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
