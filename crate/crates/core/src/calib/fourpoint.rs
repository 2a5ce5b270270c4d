//! Directional light estimate from a distant-light model fit.
//!
//! Fitting `c ≈ M·n` over many pixels in a least-squares sense recovers a
//! 3×3 matrix whose rows are the dominant-albedo-scaled light directions of a
//! directional-light approximation. Normalizing each row yields one coarse
//! direction per light. For near lights the result approximates the mean
//! direction from the surface to the light, which is exactly what the
//! hypothesis cone filter needs as its axis.

use nalgebra::{Matrix3, Vector3};

use crate::error::{CpsError, Result};

/// Least-squares matrix `M` minimizing `Σ ||c − M·n||²` over sample pixels.
///
/// Requires at least 4 samples and normals spanning all three dimensions.
pub fn calibration_matrix(
    colors: &[Vector3<f64>],
    normals: &[Vector3<f64>],
) -> Result<Matrix3<f64>> {
    if colors.len() != normals.len() {
        return Err(CpsError::ShapeMismatch(format!(
            "colors ({}) and normals ({}) differ in length",
            colors.len(),
            normals.len()
        )));
    }
    if colors.len() < 4 {
        return Err(CpsError::DegenerateGeometry(format!(
            "directional fit needs at least 4 samples, got {}",
            colors.len()
        )));
    }

    // Normal equations: M · (Σ n nᵀ) = Σ c nᵀ.
    let mut nnt = Matrix3::zeros();
    let mut cnt = Matrix3::zeros();
    for (c, n) in colors.iter().zip(normals) {
        nnt += n * n.transpose();
        cnt += c * n.transpose();
    }

    let eig = nnt.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-10 * hi.max(1e-300)) {
        return Err(CpsError::DegenerateGeometry(format!(
            "sample normals span fewer than 3 dimensions (eigenvalues {eig:?})"
        )));
    }

    let inv = nnt.try_inverse().ok_or_else(|| {
        CpsError::DegenerateGeometry("normal second-moment matrix is singular".into())
    })?;
    Ok(cnt * inv)
}

/// Coarse per-light directions: rows of [`calibration_matrix`] normalized to
/// unit length, ordered red, green, blue.
pub fn light_directions(
    colors: &[Vector3<f64>],
    normals: &[Vector3<f64>],
) -> Result<[Vector3<f64>; 3]> {
    let m = calibration_matrix(colors, normals)?;
    let mut out = [Vector3::zeros(); 3];
    for i in 0..3 {
        let row: Vector3<f64> = m.row(i).transpose();
        let norm = row.norm();
        if !(norm > 1e-12 && norm.is_finite()) {
            return Err(CpsError::DegenerateGeometry(format!(
                "light {i} direction row has norm {norm:.3e}; cannot normalize"
            )));
        }
        out[i] = row / norm;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tags};
    use rand::Rng;

    /// Near-light shading at unit albedo for light at `p`.
    fn shade(p: &Vector3<f64>, v: &Vector3<f64>, n: &Vector3<f64>) -> f64 {
        let d = p - v;
        (d.dot(n) / d.norm().powi(3)).max(0.0)
    }

    fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        (a.normalize().dot(&b.normalize())).clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Three lights at equal azimuth spacing around +z, given elevation and
    /// distance from the origin.
    fn ring_positions(dist: f64, elev_deg: f64) -> [Vector3<f64>; 3] {
        let el = elev_deg.to_radians();
        std::array::from_fn(|i| {
            let az = (i as f64) * 120.0f64.to_radians();
            Vector3::new(
                dist * el.cos() * az.cos(),
                dist * el.cos() * az.sin(),
                dist * el.sin(),
            )
        })
    }

    fn scene(
        lights: &[Vector3<f64>; 3],
        count: usize,
    ) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let mut rng = stream(3, tags::GEOMETRY, 0);
        let mut colors = Vec::new();
        let mut normals = Vec::new();
        for _ in 0..count {
            let v = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
            let n = Vector3::new(
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
                1.0,
            )
            .normalize();
            let c = Vector3::from_fn(|i, _| 0.8 * shade(&lights[i], &v, &n));
            colors.push(c);
            normals.push(n);
        }
        (colors, normals)
    }

    #[test]
    fn distant_lights_recover_directions() {
        let lights = ring_positions(10.0, 60.0);
        let (colors, normals) = scene(&lights, 400);
        let dirs = light_directions(&colors, &normals).unwrap();
        for i in 0..3 {
            assert!(
                angle_deg(&dirs[i], &lights[i]) < 1.0,
                "light {i}: {:.3}° off",
                angle_deg(&dirs[i], &lights[i])
            );
        }
    }

    #[test]
    fn near_lights_stay_within_cone_half_angle() {
        let lights = ring_positions(2.0, 65.0);
        let (colors, normals) = scene(&lights, 400);
        let dirs = light_directions(&colors, &normals).unwrap();
        // Surface points cluster around the origin, so the relevant reference
        // is the direction from the origin to each light.
        for i in 0..3 {
            assert!(
                angle_deg(&dirs[i], &lights[i]) < 15.0,
                "light {i}: {:.3}° exceeds the filter cone",
                angle_deg(&dirs[i], &lights[i])
            );
        }
    }

    #[test]
    fn three_samples_are_rejected() {
        let lights = ring_positions(2.0, 65.0);
        let (colors, normals) = scene(&lights, 3);
        assert!(matches!(
            light_directions(&colors, &normals),
            Err(CpsError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn coplanar_normals_are_rejected() {
        // All normals equal: second-moment matrix has rank 1.
        let n = Vector3::new(0.0, 0.0, 1.0);
        let normals = vec![n; 10];
        let colors = vec![Vector3::new(0.2, 0.3, 0.1); 10];
        assert!(matches!(
            light_directions(&colors, &normals),
            Err(CpsError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn exact_directional_model_is_reproduced() {
        // Build c = M·n exactly; the fit must return M (up to round-off).
        let m = Matrix3::new(0.8, 0.1, 0.0, 0.0, 0.9, 0.2, 0.1, 0.0, 0.7);
        let mut rng = stream(5, tags::GEOMETRY, 1);
        let normals: Vec<Vector3<f64>> = (0..50)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.2..1.0),
                )
                .normalize()
            })
            .collect();
        let colors: Vec<Vector3<f64>> = normals.iter().map(|n| m * n).collect();
        let est = calibration_matrix(&colors, &normals).unwrap();
        assert!((est - m).norm() < 1e-9);
    }
}
