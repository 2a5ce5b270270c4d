//! Evaluation measures: normal accuracy, light-position accuracy, and
//! relative depth error.
//!
//! Normal error is the per-pixel angle between estimated and reference unit
//! normals over the intersection of their masks. Light positions are scored
//! relative to a face center — Euclidean error normalized by the reference
//! light distance, plus the angle between the two radial directions. Depth
//! is compared after removing the integration's free constant, normalized by
//! the reference depth range.

use nalgebra::Vector3;

use crate::error::{CpsError, Result};
use crate::exec;
use crate::light::LightRig;
use crate::map::{ScalarMap, VectorMap};

/// Per-pixel angular normal error plus its mean.
#[derive(Debug, Clone)]
pub struct NormalError {
    pub mean_degrees: f64,
    /// Error in degrees per pixel, valid on the mask intersection.
    pub map: ScalarMap,
}

/// Angular error between unit normals in degrees, masks intersected.
pub fn normal_error(est: &VectorMap, gt: &VectorMap) -> Result<NormalError> {
    if !est.same_shape(gt) {
        return Err(CpsError::ShapeMismatch(format!(
            "normal maps {}x{} vs {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (w, h) = (est.width(), est.height());
    let rows = exec::map_range(h, |y| {
        let mut errs = vec![(0.0f64, false); w];
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for x in 0..w {
            let i = est.index(x, y);
            if est.is_valid(i) && gt.is_valid(i) {
                let dot = est.data()[i].dot(&gt.data()[i]).clamp(-1.0, 1.0);
                let deg = dot.acos().to_degrees();
                errs[x] = (deg, true);
                sum += deg;
                count += 1;
            }
        }
        (errs, sum, count)
    });

    let mut map = ScalarMap::filled(w, h, 0.0);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (y, (errs, row_sum, row_count)) in rows.into_iter().enumerate() {
        for (x, (deg, valid)) in errs.into_iter().enumerate() {
            if valid {
                map.set(x, y, deg);
            }
            map.set_valid(x, y, valid);
        }
        sum += row_sum;
        count += row_count;
    }
    if count == 0 {
        return Err(CpsError::InvalidInput(
            "normal maps share no valid pixels".into(),
        ));
    }
    Ok(NormalError {
        mean_degrees: sum / count as f64,
        map,
    })
}

/// Position accuracy for one light, relative to a face center.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LightPositionError {
    /// ‖p_est − p_gt‖ divided by the reference light's distance to the face.
    pub relative: f64,
    /// Angle between the estimated and reference radial directions, degrees.
    pub angular_degrees: f64,
}

/// Score all three lights of an estimated rig against a reference rig.
pub fn light_position_errors(
    est: &LightRig,
    gt: &LightRig,
    face_center: &Vector3<f64>,
) -> Result<[LightPositionError; 3]> {
    let mut out = [LightPositionError {
        relative: 0.0,
        angular_degrees: 0.0,
    }; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let radial_gt = gt.lights[i].position - face_center;
        let radial_est = est.lights[i].position - face_center;
        let dist = radial_gt.norm();
        if dist < 1e-12 {
            return Err(CpsError::InvalidInput(format!(
                "light {i}: reference position coincides with the face center"
            )));
        }
        if radial_est.norm() < 1e-12 {
            return Err(CpsError::InvalidInput(format!(
                "light {i}: estimated position coincides with the face center, \
                 angular error undefined"
            )));
        }
        let cos = (radial_est / radial_est.norm())
            .dot(&(radial_gt / dist))
            .clamp(-1.0, 1.0);
        *slot = LightPositionError {
            relative: (est.lights[i].position - gt.lights[i].position).norm() / dist,
            angular_degrees: cos.acos().to_degrees(),
        };
    }
    Ok(out)
}

/// Default evaluation anchor: the mean valid reference surface position.
pub fn default_face_center(gt_positions: &VectorMap) -> Result<Vector3<f64>> {
    gt_positions.mean_valid().ok_or_else(|| {
        CpsError::InvalidInput("no valid reference positions to average into a face center".into())
    })
}

/// Mean absolute depth error after constant-offset alignment, divided by the
/// reference depth range; all statistics over the mask intersection.
pub fn geometry_error(est: &ScalarMap, gt: &ScalarMap) -> Result<f64> {
    if !est.same_shape(gt) {
        return Err(CpsError::ShapeMismatch(format!(
            "depth maps {}x{} vs {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (w, h) = (est.width(), est.height());
    let stats = exec::map_range(h, |y| {
        let mut sum_diff = 0.0f64;
        let mut count = 0usize;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in 0..w {
            let i = est.index(x, y);
            if est.is_valid(i) && gt.is_valid(i) {
                let g = gt.data()[i];
                sum_diff += g - est.data()[i];
                count += 1;
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        (sum_diff, count, lo, hi)
    });
    let mut sum_diff = 0.0;
    let mut count = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (s, c, l, u) in &stats {
        sum_diff += s;
        count += c;
        lo = lo.min(*l);
        hi = hi.max(*u);
    }
    if count == 0 {
        return Err(CpsError::InvalidInput(
            "depth maps share no valid pixels".into(),
        ));
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(CpsError::InvalidInput(format!(
            "reference depth is flat over the shared mask (range {range}), \
             relative error undefined"
        )));
    }
    let offset = sum_diff / count as f64;
    let abs_rows = exec::map_range(h, |y| {
        let mut s = 0.0f64;
        for x in 0..w {
            let i = est.index(x, y);
            if est.is_valid(i) && gt.is_valid(i) {
                s += (est.data()[i] + offset - gt.data()[i]).abs();
            }
        }
        s
    });
    Ok(abs_rows.iter().sum::<f64>() / count as f64 / range)
}
