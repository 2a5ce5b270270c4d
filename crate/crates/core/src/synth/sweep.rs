//! Benchmark sweep generation: families of rendered cases varying one rig
//! parameter at a time, written to disk with full ground truth.
//!
//! Each case directory holds the rendered image, ground-truth normal /
//! position / albedo maps, the valid-pixel mask, a central sampling mask for
//! calibration, and the ground-truth rig. A manifest at the sweep root lists
//! every case with its parameter value so downstream evaluation can join
//! results back to the swept variable.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CpsError, Result};
use crate::io::json::{save_json, RigFile};
use crate::io::pfm::write_vector_pfm;
use crate::io::png::save_mask_png;
use crate::light::{LightRig, LightSource};
use crate::map::VectorMap;
use crate::rng::{derive_seed, tags};
use crate::synth::geometry::{central_mask, Geometry};
use crate::synth::{apply_crosstalk, render, CrosstalkModel, RenderConfig};

/// Three lights on a ring: equal 120° azimuth spacing, common elevation
/// above the horizontal plane through `center`, common distance from it.
/// Principal lobe axes aim at `center`.
pub fn ring_rig(
    center: Vector3<f64>,
    distance: f64,
    elevation_degrees: f64,
    anisotropy: f64,
) -> Result<LightRig> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "ring distance must be positive, got {distance}"
        )));
    }
    if !(0.0..90.0).contains(&elevation_degrees) {
        return Err(CpsError::InvalidInput(format!(
            "ring elevation must be in [0°, 90°) so the lights stay distinct, got {elevation_degrees}"
        )));
    }
    let e = elevation_degrees.to_radians();
    let lights = std::array::from_fn(|i| {
        let a = TAU * (0.25 + i as f64 / 3.0);
        let offset = Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin());
        let position = center + distance * offset;
        LightSource {
            position,
            principal_direction: (position - center).normalize(),
            anisotropy,
        }
    });
    LightRig::new(lights)
}

/// One rendered benchmark case: rig placement plus image degradations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub label: String,
    /// Distance from the target center to each light, in units of the
    /// target's vertical span.
    pub distance: f64,
    pub elevation_degrees: f64,
    pub anisotropy: f64,
    /// Off-diagonal value applied uniformly to both mixing matrices.
    pub crosstalk_nondiag: f64,
}

impl SweepCase {
    fn new(label: String, distance: f64, elevation_degrees: f64) -> Self {
        Self {
            label,
            distance,
            elevation_degrees,
            anisotropy: 0.0,
            crosstalk_nondiag: 0.0,
        }
    }
}

/// The swept parameter; constructors return the standard case lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Distance,
    Elevation,
    Anisotropy,
    Crosstalk,
}

impl SweepAxis {
    /// Standard case list for this axis. Fixed parameters sit at the
    /// benchmark defaults: distance 2.0, elevation 65°, isotropic, no
    /// crosstalk.
    pub fn standard_cases(self) -> Vec<SweepCase> {
        match self {
            // Distances 0.5 to 10.0 in steps of 0.5 at elevation 65°.
            SweepAxis::Distance => (1..=20)
                .map(|k| {
                    let d = 0.5 * k as f64;
                    SweepCase::new(format!("distance_{d:04.1}"), d, 65.0)
                })
                .collect(),
            // Elevations 85° down to 30° in steps of 5° at distance 2.0.
            SweepAxis::Elevation => (0..12)
                .map(|k| {
                    let e = 85.0 - 5.0 * k as f64;
                    SweepCase::new(format!("elevation_{e:02.0}"), 2.0, e)
                })
                .collect(),
            SweepAxis::Anisotropy => [0.0, 10.0, 20.0]
                .into_iter()
                .map(|mu| {
                    let mut c = SweepCase::new(format!("anisotropy_{mu:02.0}"), 2.0, 65.0);
                    c.anisotropy = mu;
                    c
                })
                .collect(),
            SweepAxis::Crosstalk => [0.0, 0.1, 0.2]
                .into_iter()
                .map(|x| {
                    let mut c = SweepCase::new(format!("crosstalk_{x:.1}"), 2.0, 65.0);
                    c.crosstalk_nondiag = x;
                    c
                })
                .collect(),
        }
    }

    /// Value of the swept variable for a case on this axis.
    pub fn value_of(self, case: &SweepCase) -> f64 {
        match self {
            SweepAxis::Distance => case.distance,
            SweepAxis::Elevation => case.elevation_degrees,
            SweepAxis::Anisotropy => case.anisotropy,
            SweepAxis::Crosstalk => case.crosstalk_nondiag,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub noise_sigma: f64,
    pub seed: u64,
    /// Side fraction of the central square emitted as the sampling mask.
    pub sample_mask_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            seed: 0,
            sample_mask_fraction: 0.5,
        }
    }
}

/// Fixed artifact names inside each case directory.
pub mod files {
    pub const IMAGE: &str = "image.pfm";
    pub const GT_NORMALS: &str = "gt_normals.pfm";
    pub const GT_POSITIONS: &str = "gt_positions.pfm";
    pub const GT_ALBEDO: &str = "gt_albedo.pfm";
    pub const MASK: &str = "mask.png";
    pub const SAMPLE_MASK: &str = "sample_mask.png";
    pub const RIG: &str = "rig.json";
    pub const MANIFEST: &str = "manifest.json";
}

/// Manifest entry for one emitted case: parameters plus artifact paths
/// relative to the sweep root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseRecord {
    #[serde(flatten)]
    pub case: SweepCase,
    /// Swept-axis value, duplicated for direct plotting.
    pub value: f64,
    pub seed: u64,
    pub dir: String,
    pub image: String,
    pub gt_normals: String,
    pub gt_positions: String,
    pub gt_albedo: String,
    pub mask: String,
    pub sample_mask: String,
    pub rig: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepManifest {
    pub axis: SweepAxis,
    pub config: SweepConfig,
    pub resolution: usize,
    pub cases: Vec<CaseRecord>,
}

/// Render one case of the given geometry/albedo and write its artifacts
/// into `dir`. Returns the ground-truth rig used.
pub fn emit_case(
    dir: &Path,
    geometry: &Geometry,
    albedo: &VectorMap,
    case: &SweepCase,
    cfg: &RenderConfig,
    sample_mask_fraction: f64,
) -> Result<LightRig> {
    let center = geometry.positions.mean_valid().ok_or_else(|| {
        CpsError::InvalidInput("geometry has no valid pixels".to_string())
    })?;
    let rig = ring_rig(center, case.distance, case.elevation_degrees, case.anisotropy)?;
    let image = if case.crosstalk_nondiag > 0.0 {
        let model =
            CrosstalkModel::uniform(case.crosstalk_nondiag, case.crosstalk_nondiag, albedo.clone())?;
        apply_crosstalk(&geometry.normals, &geometry.positions, &rig, &model, cfg)?
    } else {
        render(&geometry.normals, &geometry.positions, albedo, &rig, cfg)?
    };

    std::fs::create_dir_all(dir)?;
    write_vector_pfm(&dir.join(files::IMAGE), &image)?;
    write_vector_pfm(&dir.join(files::GT_NORMALS), &geometry.normals)?;
    write_vector_pfm(&dir.join(files::GT_POSITIONS), &geometry.positions)?;
    write_vector_pfm(&dir.join(files::GT_ALBEDO), albedo)?;
    save_mask_png(
        &dir.join(files::MASK),
        image.mask(),
        image.width(),
        image.height(),
    )?;
    let res = image.width();
    let mut sampling = central_mask(res, sample_mask_fraction);
    for (i, m) in sampling.iter_mut().enumerate() {
        *m = *m && image.is_valid(i);
    }
    save_mask_png(&dir.join(files::SAMPLE_MASK), &sampling, res, image.height())?;
    save_json(&dir.join(files::RIG), &RigFile::new(rig.clone()))?;
    Ok(rig)
}

/// Generate every standard case of the axis under `out_dir` and write the
/// sweep manifest. Cases render sequentially; rendering itself is parallel.
pub fn synth_sweep(
    out_dir: &Path,
    geometry: &Geometry,
    albedo: &VectorMap,
    axis: SweepAxis,
    cfg: &SweepConfig,
) -> Result<SweepManifest> {
    synth_sweep_cases(out_dir, geometry, albedo, axis, &axis.standard_cases(), cfg)
}

/// As [`synth_sweep`] but with an explicit case list.
pub fn synth_sweep_cases(
    out_dir: &Path,
    geometry: &Geometry,
    albedo: &VectorMap,
    axis: SweepAxis,
    cases: &[SweepCase],
    cfg: &SweepConfig,
) -> Result<SweepManifest> {
    if cases.is_empty() {
        return Err(CpsError::InvalidInput("sweep has no cases".to_string()));
    }
    if !(cfg.sample_mask_fraction > 0.0 && cfg.sample_mask_fraction <= 1.0) {
        return Err(CpsError::InvalidInput(format!(
            "sampling-mask fraction must be in (0, 1], got {}",
            cfg.sample_mask_fraction
        )));
    }
    let mut records = Vec::with_capacity(cases.len());
    for (k, case) in cases.iter().enumerate() {
        let seed = derive_seed(cfg.seed, tags::SWEEP, k as u64);
        let render_cfg = RenderConfig {
            noise_sigma: cfg.noise_sigma,
            scale_to_max: true,
            seed,
        };
        let dir = out_dir.join(&case.label);
        emit_case(
            &dir,
            geometry,
            albedo,
            case,
            &render_cfg,
            cfg.sample_mask_fraction,
        )?;
        let rel = |name: &str| {
            PathBuf::from(&case.label)
                .join(name)
                .to_string_lossy()
                .into_owned()
        };
        records.push(CaseRecord {
            case: case.clone(),
            value: axis.value_of(case),
            seed,
            dir: case.label.clone(),
            image: rel(files::IMAGE),
            gt_normals: rel(files::GT_NORMALS),
            gt_positions: rel(files::GT_POSITIONS),
            gt_albedo: rel(files::GT_ALBEDO),
            mask: rel(files::MASK),
            sample_mask: rel(files::SAMPLE_MASK),
            rig: rel(files::RIG),
        });
    }
    let manifest = SweepManifest {
        axis,
        config: cfg.clone(),
        resolution: geometry.normals.width(),
        cases: records,
    };
    save_json(&out_dir.join(files::MANIFEST), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::json::load_json;
    use crate::io::pfm::read_vector_pfm;
    use crate::synth::geometry::{sphere_cap, uniform_albedo};
    use approx::assert_relative_eq;

    #[test]
    fn ring_rig_geometry() {
        let center = Vector3::new(0.1, -0.2, 0.3);
        let rig = ring_rig(center, 2.0, 65.0, 0.0).unwrap();
        for l in &rig.lights {
            assert_relative_eq!((l.position - center).norm(), 2.0, epsilon = 1e-12);
            // Elevation above the horizontal plane through the center.
            let e = ((l.position.z - center.z) / 2.0).asin().to_degrees();
            assert_relative_eq!(e, 65.0, epsilon = 1e-9);
            // Lobe axis points from the center toward the light.
            assert_relative_eq!(
                l.principal_direction,
                (l.position - center).normalize(),
                epsilon = 1e-12
            );
        }
        // Neighboring azimuths are 120° apart.
        let az: Vec<f64> = rig
            .lights
            .iter()
            .map(|l| {
                let d = l.position - center;
                d.y.atan2(d.x).to_degrees()
            })
            .collect();
        let gap = (az[1] - az[0]).rem_euclid(360.0);
        assert_relative_eq!(gap, 120.0, epsilon = 1e-9);
        let gap = (az[2] - az[1]).rem_euclid(360.0);
        assert_relative_eq!(gap, 120.0, epsilon = 1e-9);
    }

    #[test]
    fn ring_rig_rejects_degenerate_placement() {
        assert!(ring_rig(Vector3::zeros(), 0.0, 65.0, 0.0).is_err());
        assert!(ring_rig(Vector3::zeros(), 2.0, 90.0, 0.0).is_err());
        assert!(ring_rig(Vector3::zeros(), 2.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn standard_case_counts() {
        assert_eq!(SweepAxis::Distance.standard_cases().len(), 20);
        assert_eq!(SweepAxis::Elevation.standard_cases().len(), 12);
        assert_eq!(SweepAxis::Anisotropy.standard_cases().len(), 3);
        assert_eq!(SweepAxis::Crosstalk.standard_cases().len(), 3);
        let d = SweepAxis::Distance.standard_cases();
        assert_relative_eq!(d[0].distance, 0.5);
        assert_relative_eq!(d[19].distance, 10.0);
        let e = SweepAxis::Elevation.standard_cases();
        assert_relative_eq!(e[0].elevation_degrees, 85.0);
        assert_relative_eq!(e[11].elevation_degrees, 30.0);
    }

    #[test]
    fn sweep_writes_cases_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let g = sphere_cap(24, 0.9).unwrap();
        let albedo = uniform_albedo(&g.normals, Vector3::new(0.8, 0.7, 0.6));
        let cases = vec![
            SweepCase::new("d_1".to_string(), 1.0, 65.0),
            SweepCase::new("d_2".to_string(), 2.0, 65.0),
        ];
        let cfg = SweepConfig::default();
        let manifest =
            synth_sweep_cases(tmp.path(), &g, &albedo, SweepAxis::Distance, &cases, &cfg).unwrap();
        assert_eq!(manifest.cases.len(), 2);
        assert_relative_eq!(manifest.cases[1].value, 2.0);

        let loaded: SweepManifest = load_json(&tmp.path().join(files::MANIFEST)).unwrap();
        assert_eq!(loaded.cases.len(), 2);
        for rec in &loaded.cases {
            let img = read_vector_pfm(&tmp.path().join(&rec.image)).unwrap();
            assert_eq!(img.width(), 24);
            // Scaled rendering peaks at exactly 1.
            let peak = img
                .iter_valid()
                .flat_map(|(_, c)| c.iter().copied())
                .fold(0.0f64, f64::max);
            assert_relative_eq!(peak, 1.0, epsilon = 1e-6);
            let rig: RigFile = load_json(&tmp.path().join(&rec.rig)).unwrap();
            rig.rig.validate().unwrap();
        }
    }

    #[test]
    fn empty_sweep_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let g = sphere_cap(8, 0.9).unwrap();
        let albedo = uniform_albedo(&g.normals, Vector3::from_element(1.0));
        let cfg = SweepConfig::default();
        let err = synth_sweep_cases(tmp.path(), &g, &albedo, SweepAxis::Distance, &[], &cfg);
        assert!(matches!(err, Err(CpsError::InvalidInput(_))));
    }

    #[test]
    fn crosstalk_case_differs_from_clean_case() {
        let tmp = tempfile::tempdir().unwrap();
        let g = sphere_cap(16, 0.9).unwrap();
        let albedo = uniform_albedo(&g.normals, Vector3::new(0.8, 0.7, 0.6));
        let mut clean = SweepCase::new("clean".to_string(), 2.0, 65.0);
        clean.crosstalk_nondiag = 0.0;
        let mut mixed = clean.clone();
        mixed.label = "mixed".to_string();
        mixed.crosstalk_nondiag = 0.2;
        let cfg = SweepConfig::default();
        synth_sweep_cases(
            tmp.path(),
            &g,
            &albedo,
            SweepAxis::Crosstalk,
            &[clean, mixed],
            &cfg,
        )
        .unwrap();
        let a = read_vector_pfm(&tmp.path().join("clean/image.pfm")).unwrap();
        let b = read_vector_pfm(&tmp.path().join("mixed/image.pfm")).unwrap();
        assert_ne!(a.data(), b.data());
    }
}
