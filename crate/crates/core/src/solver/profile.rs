//! Per-pixel linear profiles linking albedo chromaticity to shading.
//!
//! With per-pixel shading matrix `L` and observed color `c`, the scaled
//! normal for a chromaticity guess is `ρ̃·n = L⁻¹ (c ⊘ ρ̂) = H·ρ̂'`, where
//! `H = L⁻¹·diag(c)` and `ρ̂'` is the componentwise reciprocal of `ρ̂`. The
//! albedo-norm profile of a pixel is the map j ↦ ‖H·ρ̂'⁽ʲ⁾‖ over candidates;
//! pixels with similar profiles likely share albedo, which the similarity
//! energy measures via the Frobenius distance between their `H` matrices.

use nalgebra::{Matrix3, Vector3};

use crate::error::{CpsError, Result};
use crate::light::LightRig;
use crate::map::VectorMap;

/// `H` flattened for fast norm and distance evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PixelProfile {
    /// Row-major entries of `H`.
    pub h: [f64; 9],
    /// Squared Frobenius norm of `H`, cached for distance computations.
    pub h_norm_sq: f64,
}

impl PixelProfile {
    pub fn from_matrix(h: &Matrix3<f64>) -> Self {
        let mut flat = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                flat[3 * r + c] = h[(r, c)];
            }
        }
        let h_norm_sq = flat.iter().map(|v| v * v).sum();
        Self { h: flat, h_norm_sq }
    }

    /// ‖H·ρ̂'‖₂ — the albedo norm this pixel would have under a candidate
    /// with reciprocal chromaticity `recip`.
    #[inline]
    pub fn albedo_norm(&self, recip: &Vector3<f64>) -> f64 {
        let mut sq = 0.0;
        for r in 0..3 {
            let v = self.h[3 * r] * recip.x
                + self.h[3 * r + 1] * recip.y
                + self.h[3 * r + 2] * recip.z;
            sq += v * v;
        }
        sq.sqrt()
    }

    /// `H·ρ̂'` itself: the scaled-normal vector for a candidate.
    #[inline]
    pub fn scaled_normal(&self, recip: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.h[0] * recip.x + self.h[1] * recip.y + self.h[2] * recip.z,
            self.h[3] * recip.x + self.h[4] * recip.y + self.h[5] * recip.z,
            self.h[6] * recip.x + self.h[7] * recip.y + self.h[8] * recip.z,
        )
    }

    /// Frobenius distance ‖H₁ − H₂‖_F via the cached norms.
    #[inline]
    pub fn distance(&self, other: &Self) -> f64 {
        let mut dot = 0.0;
        for k in 0..9 {
            dot += self.h[k] * other.h[k];
        }
        (self.h_norm_sq + other.h_norm_sq - 2.0 * dot).max(0.0).sqrt()
    }
}

/// Condition number of a 3×3 matrix from its singular values; infinite when
/// rank-deficient.
pub fn condition_number(m: &Matrix3<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.amax();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Build `H = L⁻¹·diag(c)` for one pixel, rejecting ill-conditioned shading.
pub fn pixel_matrix(c: &Vector3<f64>, l: &Matrix3<f64>, condition_limit: f64) -> Result<Matrix3<f64>> {
    if condition_number(l) >= condition_limit {
        return Err(CpsError::DegenerateGeometry(format!(
            "shading matrix condition number exceeds {condition_limit:.1e}"
        )));
    }
    let inv = l.try_inverse().ok_or_else(|| {
        CpsError::DegenerateGeometry("shading matrix is singular".to_string())
    })?;
    Ok(inv * Matrix3::from_diagonal(c))
}

/// Proxy albedo chromaticity at one pixel: invert the shading predicted by
/// the proxy normal channelwise, drop channels whose predicted shading is
/// non-positive or negligible, and normalize. Returns `None` when every
/// channel is dropped or the result has no direction — the proxy prior is
/// then disabled for the pixel.
pub fn proxy_chromaticity(
    c: &Vector3<f64>,
    l: &Matrix3<f64>,
    proxy_normal: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    let shading = l * proxy_normal;
    let peak = shading.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return None;
    }
    let eps = 1e-4 * peak;
    let mut rho = Vector3::zeros();
    for i in 0..3 {
        if shading[i] > eps {
            rho[i] = (c[i] / shading[i]).max(0.0);
        }
    }
    let norm = rho.norm();
    if norm > 0.0 && norm.is_finite() {
        Some(rho / norm)
    } else {
        None
    }
}

/// Per-pixel shading matrices for a rig over a position map. Returns one
/// entry per pixel; `None` where the pixel is invalid, coincides with a
/// light, or its local shading matrix is ill-conditioned.
pub fn shading_matrices(
    rig: &LightRig,
    positions: &VectorMap,
    condition_limit: f64,
) -> Vec<Option<Matrix3<f64>>> {
    let mut out = vec![None; positions.len()];
    for (i, v) in positions.iter_valid() {
        if let Ok(l) = crate::light::shading_matrix(rig, v) {
            if condition_number(&l) < condition_limit {
                out[i] = Some(l);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_l() -> Matrix3<f64> {
        Matrix3::new(0.3, 0.1, 0.05, 0.0, 0.28, 0.1, 0.08, 0.02, 0.33)
    }

    #[test]
    fn profile_inverts_the_forward_model() {
        let l = sample_l();
        let n = Vector3::new(0.2, -0.1, 1.0).normalize();
        let rho_hat = Vector3::new(0.6, 0.5, 0.4).normalize();
        let rho_norm = 1.3;
        // Forward render: c_i = ρ_i · (L·n)_i with ρ = ρ̃·ρ̂.
        let shading = l * n;
        let c = (rho_hat * rho_norm).component_mul(&shading);
        let h = pixel_matrix(&c, &l, 1e8).unwrap();
        let p = PixelProfile::from_matrix(&h);
        let recip = Vector3::new(1.0 / rho_hat.x, 1.0 / rho_hat.y, 1.0 / rho_hat.z);
        assert_relative_eq!(p.albedo_norm(&recip), rho_norm, epsilon = 1e-9);
        let sn = p.scaled_normal(&recip);
        assert_relative_eq!(sn / sn.norm(), n, epsilon = 1e-9);
    }

    #[test]
    fn hand_checked_diagonal_example() {
        // Three axis-aligned lights at distance 1 give L = I scaled by the
        // inverse cube = 1, so H = diag(c).
        let l = Matrix3::identity();
        let c = Vector3::new(0.25, 0.0, 0.0);
        let h = pixel_matrix(&c, &l, 1e8).unwrap();
        assert_relative_eq!(h, Matrix3::from_diagonal(&c), epsilon = 1e-12);
        let p = PixelProfile::from_matrix(&h);
        let recip = Vector3::new(2.0, 1.0, 1.0);
        assert_relative_eq!(p.albedo_norm(&recip), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn singular_shading_is_rejected() {
        let mut l = sample_l();
        l.set_row(2, &(l.row(0) * 2.0)); // rank 2
        let c = Vector3::new(0.1, 0.2, 0.3);
        assert!(pixel_matrix(&c, &l, 1e8).is_err());
        assert!(condition_number(&l) > 1e12);
    }

    #[test]
    fn distance_matches_direct_frobenius() {
        let a = PixelProfile::from_matrix(&sample_l());
        let m2 = sample_l() * 1.5 + Matrix3::identity() * 0.1;
        let b = PixelProfile::from_matrix(&m2);
        let direct = (sample_l() - m2).norm();
        assert_relative_eq!(a.distance(&b), direct, epsilon = 1e-12);
        assert_relative_eq!(a.distance(&a), 0.0, epsilon = 1e-12);
        assert_relative_eq!(a.distance(&b), b.distance(&a), epsilon = 1e-12);
    }

    #[test]
    fn proxy_chromaticity_inverts_exactly_with_true_normal() {
        let l = sample_l();
        let n = Vector3::new(0.1, 0.2, 1.0).normalize();
        let rho_hat = Vector3::new(0.7, 0.6, 0.38).normalize();
        let c = (rho_hat * 0.9).component_mul(&(l * n));
        let est = proxy_chromaticity(&c, &l, &n).unwrap();
        assert_relative_eq!(est, rho_hat, epsilon = 1e-9);
    }

    #[test]
    fn proxy_chromaticity_drops_shadowed_channels() {
        // Second channel's predicted shading is negative: excluded, and the
        // result renormalizes over the remaining channels.
        let l = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let n = Vector3::new(0.0, 0.6, 0.8);
        let c = Vector3::new(0.0, 0.5, 0.4);
        let est = proxy_chromaticity(&c, &l, &n).unwrap();
        assert_relative_eq!(est, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn fully_shadowed_pixel_disables_the_prior() {
        let l = Matrix3::identity();
        let n = Vector3::new(0.0, 0.0, -1.0);
        let c = Vector3::new(0.1, 0.1, 0.1);
        assert!(proxy_chromaticity(&c, &l, &n).is_none());
        // Zero observation likewise has no direction.
        let n = Vector3::new(0.0, 0.0, 1.0);
        assert!(proxy_chromaticity(&Vector3::zeros(), &l, &n).is_none());
    }
}
