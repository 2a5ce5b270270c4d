//! Channel-crosstalk correction from single-light white-target shots.
//!
//! With one light on at a time, a crosstalk-free camera sees energy only in
//! that light's own channel. Real sensors leak: the image under light j has
//! residual in channels i ≠ j, and the per-pixel ratio channel_i / channel_j
//! measures the leak. The correction matrix is the inverse of the unit
//! diagonal ratio matrix (off-diagonal (i, j) = median ratio under light j),
//! applied by left-multiplying every pixel's RGB vector.

use nalgebra::Matrix3;

use crate::error::{CpsError, Result};
use crate::exec;
use crate::map::VectorMap;

/// Ratio matrices with a condition number above this are too close to
/// singular for a trustworthy inverse.
pub const MAX_CONDITION: f64 = 1e6;

/// Median with the average-of-middles convention for even counts.
fn median(mut v: Vec<f64>) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (left, hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Estimate the de-crosstalk matrix from three images of a white target,
/// each captured with exactly one light switched on (ordered R, G, B to
/// match the channel the light should excite).
pub fn estimate(
    under_red: &VectorMap,
    under_green: &VectorMap,
    under_blue: &VectorMap,
) -> Result<Matrix3<f64>> {
    let mut ratio = Matrix3::identity();
    for (j, image) in [under_red, under_green, under_blue].into_iter().enumerate() {
        let others = [(j + 1) % 3, (j + 2) % 3];
        let mut samples: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (_, c) in image.iter_valid() {
            let denom = c[j];
            if !(denom > 0.0 && denom.is_finite()) {
                continue;
            }
            for (slot, &i) in others.iter().enumerate() {
                let r = c[i] / denom;
                if r.is_finite() {
                    samples[slot].push(r);
                }
            }
        }
        for (slot, &i) in others.iter().enumerate() {
            if samples[slot].is_empty() {
                return Err(CpsError::InvalidInput(format!(
                    "image under light {j} has no pixels with a positive \
                     channel-{j} response to form the ({i}, {j}) ratio"
                )));
            }
            ratio[(i, j)] = median(std::mem::take(&mut samples[slot]));
        }
    }

    let sv = ratio.svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(CpsError::InvalidInput(format!(
            "crosstalk ratio matrix is near-singular (condition {:.3e})",
            if min > 0.0 { max / min } else { f64::INFINITY }
        )));
    }
    ratio.try_inverse().ok_or_else(|| {
        CpsError::InvalidInput("crosstalk ratio matrix is not invertible".into())
    })
}

/// Left-multiply every pixel by `matrix`, clamping negative results to zero.
/// Returns the corrected image and the number of clamped channel values over
/// valid pixels.
pub fn apply(matrix: &Matrix3<f64>, image: &VectorMap) -> (VectorMap, usize) {
    let (w, h) = (image.width(), image.height());
    let rows = exec::map_range(h, |y| {
        let mut values = Vec::with_capacity(w);
        let mut clamped = 0usize;
        for x in 0..w {
            let i = image.index(x, y);
            let mut v = matrix * image.data()[i];
            for c in v.iter_mut() {
                if *c < 0.0 {
                    *c = 0.0;
                    if image.is_valid(i) {
                        clamped += 1;
                    }
                }
            }
            values.push(v);
        }
        (values, clamped)
    });
    let mut out = image.clone();
    let mut clamped = 0usize;
    for (y, (values, row_clamped)) in rows.into_iter().enumerate() {
        for (x, v) in values.into_iter().enumerate() {
            out.set(x, y, v);
        }
        clamped += row_clamped;
    }
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use nalgebra::Vector3;
    use rand::Rng;

    /// White-target pure image for light `j`: channel `j` varies smoothly,
    /// the other channels are zero.
    fn pure_image(j: usize, res: usize) -> VectorMap {
        VectorMap::from_fn(res, res, |x, y| {
            let v = 0.4 + 0.5 * (x + res * y) as f64 / (res * res) as f64;
            let mut c = Vector3::zeros();
            c[j] = v;
            Some(c)
        })
    }

    fn mixed(k: &Matrix3<f64>, image: &VectorMap) -> VectorMap {
        let mut out = image.clone();
        for i in 0..out.len() {
            let (x, y) = out.coords(i);
            out.set(x, y, k * image.data()[i]);
        }
        out
    }

    #[test]
    fn pure_channel_images_give_the_identity() {
        let m = estimate(&pure_image(0, 8), &pure_image(1, 8), &pure_image(2, 8)).unwrap();
        assert_eq!(m, Matrix3::identity());
    }

    #[test]
    fn known_mixing_matrix_is_inverted_and_round_trips() {
        let k = Matrix3::new(1.0, 0.10, 0.05, 0.08, 1.0, 0.12, 0.06, 0.09, 1.0);
        let pures: Vec<VectorMap> = (0..3).map(|j| pure_image(j, 16)).collect();
        let mixes: Vec<VectorMap> = pures.iter().map(|p| mixed(&k, p)).collect();
        let m = estimate(&mixes[0], &mixes[1], &mixes[2]).unwrap();

        // Every pixel yields the same ratio K_ij / K_jj, so the estimate is
        // exactly K⁻¹.
        let k_inv = k.try_inverse().unwrap();
        assert!((m - k_inv).abs().max() < 1e-12, "{m}");

        for (pure, mix) in pures.iter().zip(&mixes) {
            let (restored, _) = apply(&m, mix);
            for i in 0..restored.len() {
                let d = (restored.data()[i] - pure.data()[i]).abs().max();
                assert!(d < 1e-6, "pixel {i} off by {d}");
            }
        }
    }

    #[test]
    fn single_leak_matches_the_hand_computed_inverse() {
        // Only green leaks into the red-light image: ratio matrix
        // [[1,0,0],[0.1,1,0],[0,0,1]], whose inverse negates the leak.
        let mut under_red = pure_image(0, 8);
        for i in 0..under_red.len() {
            let (x, y) = under_red.coords(i);
            let mut c = under_red.data()[i];
            c[1] = 0.1 * c[0];
            under_red.set(x, y, c);
        }
        let m = estimate(&under_red, &pure_image(1, 8), &pure_image(2, 8)).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, -0.1, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((m - expected).abs().max() < 1e-12, "{m}");
    }

    #[test]
    fn zero_denominator_pixels_are_left_out_of_the_medians() {
        let res = 8;
        let mut under_red = pure_image(0, res);
        for i in 0..under_red.len() {
            let (x, y) = under_red.coords(i);
            if x < res / 2 {
                // Dead denominator: no red response, stray green anyway.
                under_red.set(x, y, Vector3::new(0.0, 7.0, 0.0));
            } else {
                let mut c = under_red.data()[i];
                c[1] = 0.2 * c[0];
                under_red.set(x, y, c);
            }
        }
        let m = estimate(&under_red, &pure_image(1, res), &pure_image(2, res)).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, -0.2, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((m - expected).abs().max() < 1e-12, "{m}");
    }

    #[test]
    fn all_equal_channels_are_rejected_as_singular() {
        let gray = VectorMap::filled(8, 8, Vector3::new(0.5, 0.5, 0.5));
        assert!(matches!(
            estimate(&gray, &gray, &gray),
            Err(CpsError::InvalidInput(_))
        ));
    }

    #[test]
    fn fully_masked_input_is_rejected() {
        let mut dark = pure_image(0, 8);
        for y in 0..8 {
            for x in 0..8 {
                dark.set_valid(x, y, false);
            }
        }
        assert!(matches!(
            estimate(&dark, &pure_image(1, 8), &pure_image(2, 8)),
            Err(CpsError::InvalidInput(_))
        ));
    }

    #[test]
    fn identity_application_changes_nothing() {
        let img = mixed(
            &Matrix3::new(1.0, 0.2, 0.0, 0.0, 1.0, 0.1, 0.05, 0.0, 1.0),
            &pure_image(1, 8),
        );
        let (out, clamped) = apply(&Matrix3::identity(), &img);
        assert_eq!(out.data(), img.data());
        assert_eq!(clamped, 0);

        let zero = VectorMap::filled(4, 4, Vector3::zeros());
        let (out, clamped) = apply(&Matrix3::new(1.0, 0.3, 0.0, 0.0, 1.0, 0.0, 0.0, 0.2, 1.0), &zero);
        assert!(out.data().iter().all(|v| *v == Vector3::zeros()));
        assert_eq!(clamped, 0);
    }

    #[test]
    fn applying_the_estimate_to_its_own_inputs_removes_the_leaks() {
        let k = Matrix3::new(1.0, 0.15, 0.07, 0.12, 1.0, 0.09, 0.05, 0.11, 1.0);
        let mixes: Vec<VectorMap> = (0..3).map(|j| mixed(&k, &pure_image(j, 16))).collect();
        let m = estimate(&mixes[0], &mixes[1], &mixes[2]).unwrap();
        for (j, mix) in mixes.iter().enumerate() {
            let (restored, _) = apply(&m, mix);
            for i in [(j + 1) % 3, (j + 2) % 3] {
                let mut leftovers: Vec<f64> = restored
                    .iter_valid()
                    .map(|(_, c)| c[i].abs())
                    .collect();
                let mid = leftovers.len() / 2;
                leftovers.sort_by(f64::total_cmp);
                assert!(
                    leftovers[mid] < 1e-3,
                    "light {j} channel {i} median residual {}",
                    leftovers[mid]
                );
            }
        }
    }

    #[test]
    fn negative_results_are_clamped_and_counted() {
        let m = Matrix3::new(1.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let mut img = VectorMap::filled(2, 1, Vector3::new(0.1, 1.0, 0.3));
        img.set(1, 0, Vector3::new(5.0, 1.0, 0.3));
        let (out, clamped) = apply(&m, &img);
        assert_eq!(clamped, 1);
        assert_eq!(out.get(0, 0), Vector3::new(0.0, 1.0, 0.3));
        assert_eq!(out.get(1, 0), Vector3::new(4.0, 1.0, 0.3));
    }

    #[test]
    fn random_diagonal_dominant_mixes_round_trip() {
        let mut r = rng::stream(5, rng::tags::SWEEP, 3);
        for _ in 0..3 {
            let mut k = Matrix3::identity();
            for row in 0..3 {
                for col in 0..3 {
                    if row != col {
                        k[(row, col)] = r.random_range(0.0..0.2);
                    }
                }
            }
            let pures: Vec<VectorMap> = (0..3).map(|j| pure_image(j, 12)).collect();
            let mixes: Vec<VectorMap> = pures.iter().map(|p| mixed(&k, p)).collect();
            let m = estimate(&mixes[0], &mixes[1], &mixes[2]).unwrap();
            for (pure, mix) in pures.iter().zip(&mixes) {
                let (restored, _) = apply(&m, mix);
                for i in 0..restored.len() {
                    assert!((restored.data()[i] - pure.data()[i]).abs().max() < 1e-6);
                }
            }
        }
    }
}
