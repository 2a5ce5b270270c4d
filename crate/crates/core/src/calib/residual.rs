//! Pairwise equal-albedo residual for light-position estimation.
//!
//! For two pixels with equal albedo in one channel, the ratio of intensity to
//! near-light shading must agree; the residual measures the violation of that
//! equality for a candidate light position. The raw difference of
//! intensity·distance³/shading grows with the cube of the light distance in
//! the numerator but only linearly in the denominator, which drags minimizers
//! toward the surface. The form used here rescales both terms to remove that
//! bias: it is zero at the true position for noiseless equal-albedo pairs and
//! antisymmetric in its two pixel arguments.

use nalgebra::Vector3;

use crate::error::{CpsError, Result};

/// One pixel's contribution to calibrating a single light: the intensity in
/// that light's channel plus the proxy position and normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibSample {
    pub intensity: f64,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
}

/// Unbiased pairwise residual for candidate light position `p`.
///
/// Returns a non-finite value when `p` coincides with either surface point;
/// hot loops treat non-finite as "reject hypothesis". Use
/// [`checked_pair_residual`] where a hard error is wanted.
#[inline]
pub fn pair_residual(p: &Vector3<f64>, a1: &CalibSample, a2: &CalibSample) -> f64 {
    let d1v = p - a1.position;
    let d2v = p - a2.position;
    let d1 = d1v.norm();
    let d2 = d2v.norm();
    let s1 = d1v.dot(&a1.normal);
    let s2 = d2v.dot(&a2.normal);
    a1.intensity * s2 * d1 / (d2 * d2) - a2.intensity * s1 * d2 / (d1 * d1)
}

/// [`pair_residual`] with an explicit degenerate-geometry error when the
/// candidate position coincides with a surface point.
pub fn checked_pair_residual(
    p: &Vector3<f64>,
    a1: &CalibSample,
    a2: &CalibSample,
) -> Result<f64> {
    for a in [a1, a2] {
        if (p - a.position).norm() < 1e-12 {
            return Err(CpsError::DegenerateGeometry(format!(
                "light candidate {p:?} coincides with surface point {:?}",
                a.position
            )));
        }
    }
    Ok(pair_residual(p, a1, a2))
}

/// Squared-residual sum over all ordered pairs of a quadruplet. By
/// antisymmetry this is twice the sum over unordered pairs.
pub fn quadruplet_objective(p: &Vector3<f64>, q: &[CalibSample; 4]) -> f64 {
    let mut sum = 0.0;
    for k in 0..4 {
        for l in (k + 1)..4 {
            let r = pair_residual(p, &q[k], &q[l]);
            sum += 2.0 * r * r;
        }
    }
    sum
}

/// Residual vector whose squared norm equals [`quadruplet_objective`]: the six
/// unordered-pair residuals scaled by √2. This is the least-squares form fed
/// to the optimizer.
pub fn quadruplet_residuals(p: &Vector3<f64>, q: &[CalibSample; 4]) -> [f64; 6] {
    let mut out = [0.0; 6];
    let mut t = 0;
    for k in 0..4 {
        for l in (k + 1)..4 {
            out[t] = std::f64::consts::SQRT_2 * pair_residual(p, &q[k], &q[l]);
            t += 1;
        }
    }
    out
}

/// Voting score of pixel `w` against a quadruplet: the squared-residual sum
/// between `w` and each quadruplet member.
#[inline]
pub fn voting_score(p: &Vector3<f64>, q: &[CalibSample; 4], w: &CalibSample) -> f64 {
    let mut sum = 0.0;
    for a in q {
        let r = pair_residual(p, a, w);
        sum += r * r;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tags};
    use rand::Rng;

    /// Shading of a unit-albedo Lambertian point under a near light at `p`.
    fn shade(p: &Vector3<f64>, v: &Vector3<f64>, n: &Vector3<f64>) -> f64 {
        let d = p - v;
        d.dot(n) / d.norm().powi(3)
    }

    fn sample(p: &Vector3<f64>, v: Vector3<f64>, n: Vector3<f64>, albedo: f64) -> CalibSample {
        let n = n.normalize();
        CalibSample {
            intensity: albedo * shade(p, &v, &n),
            position: v,
            normal: n,
        }
    }

    fn gt_light() -> Vector3<f64> {
        Vector3::new(0.5, 0.3, 2.0)
    }

    #[test]
    fn zero_at_ground_truth_for_equal_albedo() {
        let p = gt_light();
        let a1 = sample(&p, Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.1, -0.2, 1.0), 0.7);
        let a2 = sample(&p, Vector3::new(-0.2, 0.1, 0.05), Vector3::new(-0.3, 0.1, 1.0), 0.7);
        assert!(checked_pair_residual(&p, &a1, &a2).unwrap().abs() < 1e-9);
    }

    #[test]
    fn identical_pixels_give_exact_zero() {
        let p = gt_light();
        let a = sample(&p, Vector3::new(0.1, 0.2, 0.0), Vector3::new(0.0, 0.0, 1.0), 0.5);
        assert_eq!(pair_residual(&p, &a, &a), 0.0);
    }

    #[test]
    fn unequal_albedo_is_nonzero_and_sign_flips() {
        let p = gt_light();
        let a1 = sample(&p, Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.1, -0.2, 1.0), 1.0);
        let a2 = sample(&p, Vector3::new(-0.2, 0.1, 0.05), Vector3::new(-0.3, 0.1, 1.0), 0.5);
        let r12 = pair_residual(&p, &a1, &a2);
        let r21 = pair_residual(&p, &a2, &a1);
        assert!(r12.abs() > 1e-6);
        assert_eq!(r12, -r21);
    }

    #[test]
    fn coincident_candidate_errors() {
        let p = gt_light();
        let a1 = sample(&p, Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.0), 1.0);
        let a2 = CalibSample {
            intensity: 0.1,
            position: p,
            normal: Vector3::new(0.0, 0.0, 1.0),
        };
        assert!(matches!(
            checked_pair_residual(&p, &a1, &a2),
            Err(CpsError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn quadruplet_objective_matches_residual_vector() {
        let p = gt_light();
        let mut rng = stream(7, tags::QUADRUPLETS, 0);
        let q: [CalibSample; 4] = std::array::from_fn(|_| {
            sample(
                &p,
                Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 0.0),
                Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 1.0),
                rng.random_range(0.3..1.0),
            )
        });
        let probe = Vector3::new(0.2, -0.1, 1.5);
        let sum: f64 = quadruplet_residuals(&probe, &q).iter().map(|r| r * r).sum();
        let direct = quadruplet_objective(&probe, &q);
        assert!((sum - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    /// The naive equal-albedo residual divides intensity·distance³ by the
    /// shading dot; its minimizer slides toward the surface when normals are
    /// noisy. The rescaled residual stays centered on the true distance. Scan
    /// a 1-D family of candidate positions along the true light direction and
    /// compare the two minimizers.
    #[test]
    fn rescaled_residual_removes_distance_bias() {
        let dir = Vector3::new(0.25, 0.15, 1.0).normalize();
        let gt_dist = 2.0;
        let p = dir * gt_dist;

        let mut rng = stream(11, tags::PROXY_NOISE, 0);
        let mut clean = Vec::new();
        let mut noisy = Vec::new();
        for _ in 0..40 {
            let v = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
            let n = Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                1.0,
            )
            .normalize();
            let c = 0.8 * shade(&p, &v, &n);
            let tilt = Vector3::new(
                rng.random_range(-0.12..0.12),
                rng.random_range(-0.12..0.12),
                0.0,
            );
            let n_noisy = (n + tilt).normalize();
            clean.push(CalibSample { intensity: c, position: v, normal: n });
            noisy.push(CalibSample { intensity: c, position: v, normal: n_noisy });
        }

        let biased = |p: &Vector3<f64>, a: &CalibSample| {
            let d = p - a.position;
            a.intensity * d.norm().powi(3) / d.dot(&a.normal)
        };
        let scan = |samples: &[CalibSample], objective: &dyn Fn(&Vector3<f64>, &CalibSample, &CalibSample) -> f64| {
            let mut best = (f64::INFINITY, 0.0);
            let mut t = 0.5;
            while t <= 4.0 {
                let cand = dir * t;
                let mut sum = 0.0;
                for i in 0..samples.len() {
                    for j in (i + 1)..samples.len() {
                        let r = objective(&cand, &samples[i], &samples[j]);
                        sum += r * r;
                    }
                }
                if sum < best.0 {
                    best = (sum, t);
                }
                t += 0.01;
            }
            best
        };

        // Noiseless data: the rescaled objective is (numerically) zero at the
        // true distance.
        let (obj_clean, t_clean) = scan(&clean, &|p, a, b| pair_residual(p, a, b));
        assert!((t_clean - gt_dist).abs() < 0.02, "clean minimizer at {t_clean}");
        assert!(obj_clean < 1e-12);

        // Noisy proxy normals: the naive form's minimizer sits closer to the
        // surface than the rescaled form's, which stays near the truth.
        let (_, t_unbiased) = scan(&noisy, &|p, a, b| pair_residual(p, a, b));
        let (_, t_biased) = scan(&noisy, &|p, a, b| biased(p, a) - biased(p, b));
        assert!(
            t_biased < t_unbiased,
            "naive minimizer {t_biased} should undershoot rescaled {t_unbiased}"
        );
        assert!(
            (t_unbiased - gt_dist).abs() < (t_biased - gt_dist).abs(),
            "rescaled {t_unbiased} should beat naive {t_biased} against truth {gt_dist}"
        );
    }
}
