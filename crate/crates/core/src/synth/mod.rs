//! Synthetic rendering of ground-truth scenes under near point lighting.
//!
//! The renderer evaluates the forward model the reconstruction inverts: per
//! channel, intensity is albedo times the inverse-square near-light shading,
//! clamped at zero where the surface faces away from the light (attached
//! shadows — cast shadows are not simulated, geometry is chosen so attached
//! shadows dominate). Options cover anisotropic lobes, channel crosstalk,
//! global scaling to a maximum intensity of 1, and seeded Gaussian noise.

pub mod geometry;
pub mod sweep;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CpsError, Result};
use crate::exec;
use crate::light::LightRig;
use crate::map::VectorMap;
use crate::rng::{stream, tags};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Additive Gaussian noise, in normalized intensity units; 0 disables.
    pub noise_sigma: f64,
    /// Rescale so the global maximum intensity is exactly 1 (saturation-free
    /// normalization; noise magnitudes assume this convention).
    pub scale_to_max: bool,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            scale_to_max: true,
            seed: 0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CpsError::InvalidInput(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn check_render_inputs(
    normals: &VectorMap,
    positions: &VectorMap,
    albedo: &VectorMap,
    rig: &LightRig,
    cfg: &RenderConfig,
) -> Result<()> {
    cfg.validate()?;
    rig.validate()?;
    if !(normals.same_shape(positions) && normals.same_shape(albedo)) {
        return Err(CpsError::ShapeMismatch(format!(
            "normals {}x{}, positions {}x{}, albedo {}x{} must agree",
            normals.width(),
            normals.height(),
            positions.width(),
            positions.height(),
            albedo.width(),
            albedo.height()
        )));
    }
    normals.assert_unit_normals(1e-6)?;
    for (i, a) in albedo.iter_valid() {
        if !(a.iter().all(|c| c.is_finite() && *c >= 0.0)) {
            let (x, y) = albedo.coords(i);
            return Err(CpsError::BadPixel {
                x,
                y,
                reason: format!("albedo {a:?} must be finite and non-negative"),
            });
        }
    }
    Ok(())
}

/// Per-light shading vector at one surface point: lobe factor times the
/// clamped Lambertian near-light shading, one entry per light.
fn shading_vector(rig: &LightRig, v: &Vector3<f64>, n: &Vector3<f64>) -> Result<Vector3<f64>> {
    let mut s = Vector3::zeros();
    for (j, light) in rig.lights.iter().enumerate() {
        let row = light.shading_row(v)?;
        s[j] = light.lobe_factor(v) * row.dot(n).max(0.0);
    }
    Ok(s)
}

/// Post-processing shared by all render paths: mask intersection happened
/// already; apply global scaling and seeded per-row noise.
fn finish_image(mut image: VectorMap, cfg: &RenderConfig) -> VectorMap {
    if cfg.scale_to_max {
        let peak = image
            .iter_valid()
            .flat_map(|(_, c)| c.iter().copied())
            .fold(0.0f64, f64::max);
        if peak > 0.0 {
            for c in image.data_mut() {
                *c /= peak;
            }
        }
    }
    if cfg.noise_sigma > 0.0 {
        let width = image.width();
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
        let mask = image.mask().to_vec();
        let seed = cfg.seed;
        exec::for_each_row(image.data_mut(), width, |row, pixels| {
            let mut rng = stream(seed, tags::RENDER_NOISE, row as u64);
            for (col, c) in pixels.iter_mut().enumerate() {
                if mask[row * width + col] {
                    for k in 0..3 {
                        c[k] = (c[k] + normal.sample(&mut rng)).clamp(0.0, 1.0);
                    }
                } else {
                    // Keep the stream position independent of the mask so
                    // masked variants of the same scene share noise values.
                    for _ in 0..3 {
                        let _: f64 = rng.random();
                    }
                }
            }
        });
    }
    image
}

/// Render a Lambertian image of the scene under the rig. Invalid pixels in
/// any input map are invalid in the output.
pub fn render(
    normals: &VectorMap,
    positions: &VectorMap,
    albedo: &VectorMap,
    rig: &LightRig,
    cfg: &RenderConfig,
) -> Result<VectorMap> {
    check_render_inputs(normals, positions, albedo, rig, cfg)?;
    let (w, h) = (normals.width(), normals.height());
    let mut mask = normals.mask().to_vec();
    for i in 0..mask.len() {
        mask[i] = mask[i] && positions.is_valid(i) && albedo.is_valid(i);
    }

    let rows = exec::map_range(h, |y| -> Result<Vec<Vector3<f64>>> {
        let mut row = vec![Vector3::zeros(); w];
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            let s = shading_vector(rig, &positions.data()[i], &normals.data()[i])?;
            *out = albedo.data()[i].component_mul(&s);
        }
        Ok(row)
    });

    let mut data = Vec::with_capacity(w * h);
    for row in rows {
        data.extend(row?);
    }
    let image = VectorMap::from_parts(w, h, data, mask)?;
    Ok(finish_image(image, cfg))
}

/// Spectral mixing between lights and camera channels: the per-pixel albedo
/// matrix is `S · diag(r) · E` where `S` holds camera responses, `E` light
/// spectra (unit diagonals both), and `r` the per-pixel reflectance.
#[derive(Debug, Clone)]
pub struct CrosstalkModel {
    pub s: Matrix3<f64>,
    pub e: Matrix3<f64>,
    pub reflectance: VectorMap,
}

impl CrosstalkModel {
    /// Model with all off-diagonals of `S` and `E` set to the given values.
    pub fn uniform(s_nondiag: f64, e_nondiag: f64, reflectance: VectorMap) -> Result<Self> {
        let fill = |v: f64| Matrix3::from_fn(|r, c| if r == c { 1.0 } else { v });
        let model = Self {
            s: fill(s_nondiag),
            e: fill(e_nondiag),
            reflectance,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("camera response", &self.s), ("light spectrum", &self.e)] {
            for i in 0..3 {
                if (m[(i, i)] - 1.0).abs() > 1e-12 {
                    return Err(CpsError::InvalidInput(format!(
                        "{name} matrix diagonal must be 1, got {}",
                        m[(i, i)]
                    )));
                }
                for j in 0..3 {
                    if i != j && !(m[(i, j)] >= 0.0 && m[(i, j)].is_finite()) {
                        return Err(CpsError::InvalidInput(format!(
                            "{name} matrix off-diagonal must be finite and non-negative, got {}",
                            m[(i, j)]
                        )));
                    }
                }
            }
        }
        for (i, r) in self.reflectance.iter_valid() {
            if !(r.iter().all(|c| c.is_finite() && *c >= 0.0)) {
                let (x, y) = self.reflectance.coords(i);
                return Err(CpsError::BadPixel {
                    x,
                    y,
                    reason: format!("reflectance {r:?} must be finite and non-negative"),
                });
            }
        }
        Ok(())
    }

    /// Mixing matrix at one pixel: `S · diag(r) · E`, entrywise non-negative.
    pub fn mixing_at(&self, i: usize) -> Matrix3<f64> {
        let r = self.reflectance.data()[i];
        self.s * Matrix3::from_diagonal(&r) * self.e
    }
}

/// Render with channel crosstalk: each light's clamped shading is mixed into
/// all channels through the pixel's mixing matrix. With identity `S` and `E`
/// this reduces exactly to [`render`] with the reflectance as albedo.
pub fn apply_crosstalk(
    normals: &VectorMap,
    positions: &VectorMap,
    rig: &LightRig,
    model: &CrosstalkModel,
    cfg: &RenderConfig,
) -> Result<VectorMap> {
    model.validate()?;
    check_render_inputs(normals, positions, &model.reflectance, rig, cfg)?;
    let (w, h) = (normals.width(), normals.height());
    let mut mask = normals.mask().to_vec();
    for i in 0..mask.len() {
        mask[i] = mask[i] && positions.is_valid(i) && model.reflectance.is_valid(i);
    }

    let rows = exec::map_range(h, |y| -> Result<Vec<Vector3<f64>>> {
        let mut row = vec![Vector3::zeros(); w];
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !mask[i] {
                continue;
            }
            let s = shading_vector(rig, &positions.data()[i], &normals.data()[i])?;
            *out = model.mixing_at(i) * s;
        }
        Ok(row)
    });

    let mut data = Vec::with_capacity(w * h);
    for row in rows {
        data.extend(row?);
    }
    let image = VectorMap::from_parts(w, h, data, mask)?;
    Ok(finish_image(image, cfg))
}
