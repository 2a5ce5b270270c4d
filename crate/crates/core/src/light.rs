//! Near point light model.
//!
//! Each of the three lights is bound to one camera channel (index 0 = red,
//! 1 = green, 2 = blue). A light contributes to its channel in proportion to
//! the inverse-square falloff along the direction from the surface point to
//! the light, optionally shaped by a radial anisotropy lobe around a
//! principal direction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CpsError, Result};

/// One near point light.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightSource {
    /// Position in camera coordinates.
    pub position: Vector3<f64>,
    /// Lobe axis (unit length), expressed in the surface-to-light sense: the
    /// lobe response dots this with the unit vector from the surface point
    /// toward the light, so a light at `p` aimed at a scene centered at `c`
    /// carries `normalize(p − c)`. Irrelevant when `anisotropy` is zero but
    /// kept normalized regardless.
    pub principal_direction: Vector3<f64>,
    /// Lobe exponent; 0 = isotropic, larger = narrower beam.
    pub anisotropy: f64,
}

impl LightSource {
    /// Isotropic light at `position`, aimed at the origin.
    pub fn isotropic(position: Vector3<f64>) -> Self {
        let dir = if position.norm() > 0.0 {
            position.normalize()
        } else {
            Vector3::new(0.0, 0.0, 1.0)
        };
        Self {
            position,
            principal_direction: dir,
            anisotropy: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(CpsError::InvalidInput("light position is not finite".into()));
        }
        let n = self.principal_direction.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(CpsError::InvalidInput(format!(
                "principal direction must be unit length (norm {n:.6})"
            )));
        }
        if !(self.anisotropy >= 0.0 && self.anisotropy.is_finite()) {
            return Err(CpsError::InvalidInput(format!(
                "anisotropy must be finite and non-negative, got {}",
                self.anisotropy
            )));
        }
        Ok(())
    }

    /// Shading row for a surface point `v`: direction to the light divided by
    /// the cubed distance, so that dotting with a surface normal yields the
    /// inverse-square Lambertian shading term.
    pub fn shading_row(&self, v: &Vector3<f64>) -> Result<Vector3<f64>> {
        let d = self.position - v;
        let dist = d.norm();
        if dist < 1e-12 {
            return Err(CpsError::DegenerateGeometry(format!(
                "surface point coincides with light at {:?}",
                self.position
            )));
        }
        Ok(d / (dist * dist * dist))
    }

    /// Anisotropy factor for a surface point: the lobe response
    /// `max(axis · unit(p − v), 0) ^ anisotropy`, which is 1 for isotropic
    /// lights. The cosine is clamped before exponentiation so non-integer
    /// exponents stay well-defined behind the lobe.
    pub fn lobe_factor(&self, v: &Vector3<f64>) -> f64 {
        if self.anisotropy == 0.0 {
            return 1.0;
        }
        let d = self.position - v;
        let n = d.norm();
        if n < 1e-12 {
            return 1.0;
        }
        let cosine = (d / n).dot(&self.principal_direction).max(0.0);
        cosine.powf(self.anisotropy)
    }
}

/// The full three-light rig, ordered to match camera channels (R, G, B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub lights: [LightSource; 3],
}

impl LightRig {
    pub fn new(lights: [LightSource; 3]) -> Result<Self> {
        let rig = Self { lights };
        rig.validate()?;
        Ok(rig)
    }

    pub fn isotropic(positions: [Vector3<f64>; 3]) -> Result<Self> {
        Self::new(positions.map(LightSource::isotropic))
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.lights {
            l.validate()?;
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                if (self.lights[i].position - self.lights[j].position).norm() < 1e-9 {
                    return Err(CpsError::DegenerateGeometry(format!(
                        "lights {i} and {j} share position {:?}",
                        self.lights[i].position
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> [Vector3<f64>; 3] {
        [
            self.lights[0].position,
            self.lights[1].position,
            self.lights[2].position,
        ]
    }
}

/// Per-pixel 3x3 shading matrix: row `j` is the shading row of light `j`
/// evaluated at surface point `v`. `c = albedo .* (L * n)` is the forward
/// model for a Lambertian point under this rig.
pub fn shading_matrix(rig: &LightRig, v: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let mut m = Matrix3::zeros();
    for (j, light) in rig.lights.iter().enumerate() {
        let row = light.shading_row(v)?;
        m.set_row(j, &row.transpose());
    }
    Ok(m)
}

/// A unit-length, componentwise non-negative RGB direction describing the
/// ratio structure of an albedo (its "color" with brightness divided out).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromaticity(Vector3<f64>);

impl Chromaticity {
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        if !(v.iter().all(|c| c.is_finite() && *c >= 0.0)) {
            return Err(CpsError::InvalidInput(format!(
                "chromaticity components must be finite and non-negative: {v:?}"
            )));
        }
        let n = v.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(CpsError::InvalidInput(format!(
                "chromaticity must be unit length (norm {n:.12})"
            )));
        }
        Ok(Self(v))
    }

    /// Normalize an arbitrary non-negative vector into a chromaticity.
    pub fn from_unnormalized(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(CpsError::InvalidInput(format!(
                "cannot derive chromaticity from {v:?}"
            )));
        }
        Self::new(v / n)
    }

    #[inline]
    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Componentwise reciprocal, used when dividing shading by color.
    /// Errors if any component is zero.
    pub fn reciprocal(&self) -> Result<Vector3<f64>> {
        if self.0.iter().any(|c| *c <= 0.0) {
            return Err(CpsError::InvalidInput(format!(
                "chromaticity {:?} has a zero component; reciprocal undefined",
                self.0
            )));
        }
        Ok(Vector3::new(1.0 / self.0.x, 1.0 / self.0.y, 1.0 / self.0.z))
    }
}
