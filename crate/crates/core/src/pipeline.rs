//! End-to-end reconstruction runs: stage composition plus run artifacts.
//!
//! A run takes one RGB image, proxy normal and position maps, and optional
//! ground truth, then executes de-crosstalk (optional) → light calibration →
//! per-pixel reconstruction → depth integration → evaluation. Every stage's
//! outputs land in one directory together with a provenance file (config +
//! seeds + tool version, byte-stable across reruns) and a separate timing
//! file (wall-clock, excluded from reproducibility comparisons).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calib::{calibrate_all, CalibConfig, RigCalibration};
use crate::decrosstalk;
use crate::error::{CpsError, Result};
use crate::integrate::{integrate_detailed, Integration};
use crate::io::json::{load_json, save_json, MatrixFile, RigFile};
use crate::io::pfm::{read_vector_pfm, write_scalar_pfm, write_vector_pfm};
use crate::io::png::{load_mask_png, save_preview_png};
use crate::map::{ScalarMap, VectorMap};
use crate::mesh::export_mesh;
use crate::metrics::{
    geometry_error, light_position_errors, normal_error, LightPositionError,
};
use crate::solver::{solve, Ablation, Reconstruction, SolverConfig};

/// Fixed artifact names inside a run directory.
pub mod files {
    pub const DECROSSTALKED: &str = "decrosstalked.pfm";
    pub const CALIBRATION: &str = "calibration.json";
    pub const RIG: &str = "rig.json";
    pub const NORMALS: &str = "normals.pfm";
    pub const ALBEDO: &str = "albedo.pfm";
    pub const CHROMATICITY: &str = "chromaticity.pfm";
    pub const NORMALS_PREVIEW: &str = "normals_preview.png";
    pub const DEPTH: &str = "depth.pfm";
    pub const MESH: &str = "mesh.obj";
    pub const NORMAL_ERROR: &str = "normal_error.pfm";
    pub const REPORT: &str = "report.json";
    pub const PROVENANCE: &str = "provenance.json";
    pub const TIMING: &str = "timing.json";
}

/// One full run: input paths, optional ground truth, stage parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Rendered or captured RGB image (PFM).
    pub image: PathBuf,
    /// Proxy normal map (PFM); drives calibration and the proxy energy.
    pub proxy_normals: PathBuf,
    /// Proxy position map (PFM); supplies per-pixel scene points.
    pub proxy_positions: PathBuf,
    /// Calibration sampling mask (PNG); defaults to the image mask.
    pub sample_mask: Option<PathBuf>,
    /// De-crosstalk matrix (JSON); when set, the image is corrected first.
    pub decrosstalk: Option<PathBuf>,
    /// Ground-truth normal map (PFM); enables the normal-error report.
    pub gt_normals: Option<PathBuf>,
    /// Ground-truth position map (PFM); enables the depth-error report.
    pub gt_positions: Option<PathBuf>,
    /// Ground-truth rig (JSON); enables the light-position report.
    pub gt_rig: Option<PathBuf>,
    /// Scene distance between adjacent pixels; defaults to 1 / image width.
    pub pixel_pitch: Option<f64>,
    /// Master seed; overrides the per-stage seeds so one knob controls every
    /// randomized stage.
    pub seed: u64,
    pub calib: CalibConfig,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            image: PathBuf::new(),
            proxy_normals: PathBuf::new(),
            proxy_positions: PathBuf::new(),
            sample_mask: None,
            decrosstalk: None,
            gt_normals: None,
            gt_positions: None,
            gt_rig: None,
            pixel_pitch: None,
            seed: 0,
            calib: CalibConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Check that every referenced input exists before any stage runs.
    pub fn validate(&self) -> Result<()> {
        let required = [
            ("image", &self.image),
            ("proxy_normals", &self.proxy_normals),
            ("proxy_positions", &self.proxy_positions),
        ];
        for (name, path) in required {
            if path.as_os_str().is_empty() {
                return Err(CpsError::InvalidInput(format!("{name} is not set")));
            }
            if !path.exists() {
                return Err(CpsError::InvalidInput(format!(
                    "{name} file does not exist: {}",
                    path.display()
                )));
            }
        }
        let optional = [
            ("sample_mask", &self.sample_mask),
            ("decrosstalk", &self.decrosstalk),
            ("gt_normals", &self.gt_normals),
            ("gt_positions", &self.gt_positions),
            ("gt_rig", &self.gt_rig),
        ];
        for (name, path) in optional {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CpsError::InvalidInput(format!(
                        "{name} file does not exist: {}",
                        p.display()
                    )));
                }
            }
        }
        if let Some(p) = self.pixel_pitch {
            if !(p > 0.0 && p.is_finite()) {
                return Err(CpsError::InvalidInput(format!(
                    "pixel_pitch must be positive and finite, got {p}"
                )));
            }
        }
        self.calib.validate()?;
        self.solver.validate()
    }
}

/// Metric summary written as `report.json`; absent ground truth leaves the
/// corresponding entries null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Mean angular normal error over the shared mask, degrees.
    pub mean_normal_error_degrees: Option<f64>,
    /// Same, restricted to pixels lit in all three channels.
    pub lit_mean_normal_error_degrees: Option<f64>,
    pub light_errors: Option<[LightPositionError; 3]>,
    pub relative_geometry_error: Option<f64>,
    pub unsolved_pixels: usize,
    pub integrated_components: usize,
    pub dropped_pixels: usize,
    /// Channel values clamped negative by the de-crosstalk stage.
    pub clamped_values: Option<usize>,
}

/// Reproducibility record: everything that determines the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub stages: Vec<StageTime>,
}

/// In-memory results of a run; the same data is also on disk.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub calibration: RigCalibration,
    pub reconstruction: Reconstruction,
    pub integration: Integration,
    pub report: EvaluationReport,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| CpsError::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Pixels receiving light in every channel: all three values above a small
/// fraction of the image peak. Shadowed pixels fail at least one channel.
fn lit_mask(image: &VectorMap) -> Vec<bool> {
    let peak = image
        .iter_valid()
        .flat_map(|(_, c)| c.iter().copied())
        .fold(0.0f64, f64::max);
    let floor = 1e-3 * peak;
    (0..image.len())
        .map(|i| {
            image.is_valid(i) && image.data()[i].iter().all(|&c| c > floor)
        })
        .collect()
}

/// Execute every stage of a run into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut timing = Timing { stages: Vec::new() };
    let clock = |stages: &mut Vec<StageTime>, name: &str, start: Instant| {
        stages.push(StageTime {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    let start = Instant::now();
    let mut image = stage("load", read_vector_pfm(&config.image))?;
    let proxy_normals = stage("load", read_vector_pfm(&config.proxy_normals))?;
    let proxy_positions = stage("load", read_vector_pfm(&config.proxy_positions))?;
    let sample_mask = match &config.sample_mask {
        Some(p) => {
            let (mask, w, h) = stage("load", load_mask_png(p))?;
            if w != image.width() || h != image.height() {
                return Err(CpsError::Stage {
                    stage: "load",
                    source: Box::new(CpsError::ShapeMismatch(format!(
                        "sample mask {w}x{h} vs image {}x{}",
                        image.width(),
                        image.height()
                    ))),
                });
            }
            mask
        }
        None => image.mask().to_vec(),
    };
    clock(&mut timing.stages, "load", start);

    let mut clamped_values = None;
    if let Some(path) = &config.decrosstalk {
        let start = Instant::now();
        let matrix: MatrixFile = stage("decrosstalk", load_json(path))?;
        let (corrected, clamped) = decrosstalk::apply(&matrix.matrix(), &image);
        image = corrected;
        clamped_values = Some(clamped);
        stage(
            "decrosstalk",
            write_vector_pfm(out_dir.join(files::DECROSSTALKED), &image),
        )?;
        clock(&mut timing.stages, "decrosstalk", start);
    }

    let start = Instant::now();
    let mut calib_cfg = config.calib.clone();
    calib_cfg.seed = config.seed;
    let calibration = stage(
        "calibrate",
        calibrate_all(
            &image,
            &proxy_normals,
            &proxy_positions,
            &sample_mask,
            &calib_cfg,
        ),
    )?;
    stage(
        "calibrate",
        save_json(out_dir.join(files::CALIBRATION), &calibration),
    )?;
    stage(
        "calibrate",
        save_json(
            out_dir.join(files::RIG),
            &RigFile::new(calibration.rig.clone()),
        ),
    )?;
    clock(&mut timing.stages, "calibrate", start);

    let start = Instant::now();
    let mut solver_cfg = config.solver.clone();
    solver_cfg.seed = config.seed;
    let proxy_for_solver = match solver_cfg.ablation {
        Ablation::Full => Some(&proxy_normals),
        _ => None,
    };
    let reconstruction = stage(
        "reconstruct",
        solve(
            &image,
            &calibration.rig,
            &proxy_positions,
            proxy_for_solver,
            &solver_cfg,
        ),
    )?;
    stage(
        "reconstruct",
        write_vector_pfm(out_dir.join(files::NORMALS), &reconstruction.normals),
    )?;
    stage(
        "reconstruct",
        write_vector_pfm(out_dir.join(files::ALBEDO), &reconstruction.albedo),
    )?;
    stage(
        "reconstruct",
        write_vector_pfm(
            out_dir.join(files::CHROMATICITY),
            &reconstruction.chromaticity,
        ),
    )?;
    let mut preview = reconstruction.normals.clone();
    for i in 0..preview.len() {
        let (x, y) = preview.coords(i);
        let n = preview.data()[i];
        preview.set(x, y, (n + Vector3::new(1.0, 1.0, 1.0)) * 0.5);
    }
    stage(
        "reconstruct",
        save_preview_png(out_dir.join(files::NORMALS_PREVIEW), &preview, 1.0),
    )?;
    clock(&mut timing.stages, "reconstruct", start);

    let start = Instant::now();
    let pitch = config
        .pixel_pitch
        .unwrap_or(1.0 / image.width() as f64);
    let integration = stage(
        "integrate",
        integrate_detailed(&reconstruction.normals, pitch),
    )?;
    stage(
        "integrate",
        write_scalar_pfm(out_dir.join(files::DEPTH), &integration.depth),
    )?;
    stage(
        "integrate",
        export_mesh(
            out_dir.join(files::MESH),
            &integration.depth,
            Some(&reconstruction.normals),
            pitch,
        ),
    )?;
    clock(&mut timing.stages, "integrate", start);

    let start = Instant::now();
    let report = stage(
        "evaluate",
        evaluate(
            config,
            out_dir,
            &image,
            &calibration,
            &reconstruction,
            &integration,
            clamped_values,
        ),
    )?;
    stage("evaluate", save_json(out_dir.join(files::REPORT), &report))?;
    clock(&mut timing.stages, "evaluate", start);

    save_json(
        out_dir.join(files::PROVENANCE),
        &Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        },
    )?;
    save_json(out_dir.join(files::TIMING), &timing)?;

    Ok(PipelineOutcome {
        calibration,
        reconstruction,
        integration,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    config: &PipelineConfig,
    out_dir: &Path,
    image: &VectorMap,
    calibration: &RigCalibration,
    reconstruction: &Reconstruction,
    integration: &Integration,
    clamped_values: Option<usize>,
) -> Result<EvaluationReport> {
    let mut report = EvaluationReport {
        mean_normal_error_degrees: None,
        lit_mean_normal_error_degrees: None,
        light_errors: None,
        relative_geometry_error: None,
        unsolved_pixels: reconstruction.unsolved_pixels,
        integrated_components: integration.components,
        dropped_pixels: integration.dropped_pixels,
        clamped_values,
    };

    let gt_positions = match &config.gt_positions {
        Some(p) => Some(read_vector_pfm(p)?),
        None => None,
    };

    if let Some(path) = &config.gt_normals {
        let gt = read_vector_pfm(path)?;
        let errors = normal_error(&reconstruction.normals, &gt)?;
        write_scalar_pfm(out_dir.join(files::NORMAL_ERROR), &errors.map)?;
        report.mean_normal_error_degrees = Some(errors.mean_degrees);

        let mut lit_est = reconstruction.normals.clone();
        lit_est.intersect_mask(&lit_mask(image));
        if lit_est.valid_count() > 0 {
            report.lit_mean_normal_error_degrees =
                Some(normal_error(&lit_est, &gt)?.mean_degrees);
        }
    }

    if let Some(path) = &config.gt_rig {
        let gt_rig: RigFile = load_json(path)?;
        // Anchor at the reference surface when available, the proxy otherwise.
        let anchor = match &gt_positions {
            Some(m) => m.mean_valid(),
            None => read_vector_pfm(&config.proxy_positions)?.mean_valid(),
        }
        .ok_or_else(|| {
            CpsError::InvalidInput("no valid positions to anchor light metrics".into())
        })?;
        report.light_errors = Some(light_position_errors(
            &calibration.rig,
            &gt_rig.rig,
            &anchor,
        )?);
    }

    if let Some(gtp) = &gt_positions {
        let mut gt_depth = ScalarMap::filled(gtp.width(), gtp.height(), 0.0);
        for i in 0..gtp.len() {
            let (x, y) = gt_depth.coords(i);
            gt_depth.set(x, y, gtp.data()[i].z);
            gt_depth.set_valid(x, y, gtp.is_valid(i));
        }
        report.relative_geometry_error =
            Some(geometry_error(&integration.depth, &gt_depth)?);
    }

    Ok(report)
}
