//! Light-position estimation by quadruplet sampling, voting, cone filtering,
//! and weighted hypothesis merging.
//!
//! Each light is calibrated independently from the pixels of its own channel:
//! random quadruplets of masked pixels are assumed equal-albedo, each yields a
//! position hypothesis via a small nonlinear fit, voting scores hypotheses
//! against a pixel subset, implausible hypotheses outside a cone around the
//! coarse directional estimate are dropped, and the survivors are averaged
//! with inlier-count weights. Keeping many hypotheses instead of the single
//! best one smooths out the noise that an inaccurate proxy injects into every
//! individual fit.
//!
//! All random draws come from per-iteration seeded streams shared across
//! lights, so results are independent of thread count and permuting the image
//! channels permutes the calibrated positions exactly.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calib::fourpoint;
use crate::calib::lm::{self, LmOptions, LmOutcome};
use crate::calib::residual::{quadruplet_residuals, voting_score, CalibSample};
use crate::error::{CpsError, Result};
use crate::exec;
use crate::light::{LightRig, LightSource};
use crate::map::VectorMap;
use crate::rng::{stream, tags};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    /// Number of sampled quadruplets per light.
    pub iterations: usize,
    /// Inlier threshold on the squared-residual sum (compared against τ²).
    pub tau: f64,
    /// Half-angle of the plausibility cone, degrees.
    pub eta_degrees: f64,
    /// Upper bound on the number of voting pixels per light.
    pub voting_limit: usize,
    pub seed: u64,
    #[serde(skip, default)]
    pub lm: LmOptions,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            tau: 0.01,
            eta_degrees: 15.0,
            voting_limit: 5000,
            seed: 0,
            lm: LmOptions::default(),
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(CpsError::InvalidInput("calibration needs at least 1 iteration".into()));
        }
        if !(self.tau > 0.0) {
            return Err(CpsError::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eta_degrees > 0.0 && self.eta_degrees < 90.0) {
            return Err(CpsError::InvalidInput(format!(
                "cone half-angle must lie in (0°, 90°), got {}",
                self.eta_degrees
            )));
        }
        Ok(())
    }
}

/// One candidate light position produced by a quadruplet fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHypothesis {
    pub position: Vector3<f64>,
    /// Votes received from the voting subset.
    pub inliers: usize,
    /// Flat pixel indices of the source quadruplet.
    pub quadruplet: [usize; 4],
    /// Final fit objective (squared-residual sum over ordered pairs).
    pub objective: f64,
    /// Whether the fit met its gradient tolerance within budget.
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibDiagnostics {
    /// Usable (lit, masked) pixels for this light.
    pub samples: usize,
    pub voting_pixels: usize,
    pub degenerate_quadruplets: usize,
    /// Fits rejected for non-finite outcomes.
    pub rejected_hypotheses: usize,
    /// Axis of the plausibility cone (coarse directional estimate).
    pub cone_axis: Vector3<f64>,
    pub kept_after_filter: usize,
    /// True when every hypothesis failed the cone test and merging fell back
    /// to the unfiltered set.
    pub filter_fallback: bool,
    /// True when all merged hypotheses had zero inliers and uniform weights
    /// were substituted.
    pub zero_weight_fallback: bool,
    /// Best single hypothesis (most inliers), for comparison with merging.
    pub vanilla_position: Vector3<f64>,
    pub vanilla_inliers: usize,
    /// Hypothesis counts over 16 equal inlier-count buckets.
    pub inlier_histogram: Vec<usize>,
}

/// Calibration output for one light.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibResult {
    pub light_index: usize,
    /// Merged position estimate.
    pub position: Vector3<f64>,
    pub hypotheses: Vec<CalibrationHypothesis>,
    pub diagnostics: CalibDiagnostics,
}

/// Calibration output for the full rig.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigCalibration {
    pub rig: LightRig,
    pub lights: Vec<CalibResult>,
}

/// Fit a light position to one quadruplet by damped least squares.
///
/// Rejects quadruplets containing effectively identical pixels (no constraint
/// diversity) and fits whose outcome is non-finite.
pub fn solve_hypothesis(
    quadruplet: &[CalibSample; 4],
    init: Vector3<f64>,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            let dv = (quadruplet[i].position - quadruplet[j].position).norm();
            let dn = (quadruplet[i].normal - quadruplet[j].normal).norm();
            if dv < 1e-9 && dn < 1e-9 {
                return Err(CpsError::DegenerateGeometry(
                    "quadruplet contains duplicate surface points".into(),
                ));
            }
        }
    }
    let out = lm::minimize(|p| quadruplet_residuals(p, quadruplet), init, opts);
    if !(out.objective.is_finite() && out.position.iter().all(|v| v.is_finite())) {
        return Err(CpsError::DegenerateGeometry(
            "quadruplet fit produced a non-finite outcome".into(),
        ));
    }
    Ok(out)
}

/// Count voting pixels whose squared-residual sum against the quadruplet is
/// strictly below τ².
pub fn count_inliers(
    position: &Vector3<f64>,
    quadruplet: &[CalibSample; 4],
    voters: &[CalibSample],
    tau: f64,
) -> usize {
    let tau2 = tau * tau;
    voters
        .iter()
        .filter(|w| voting_score(position, quadruplet, w) < tau2)
        .count()
}

/// Keep hypotheses inside the cone of half-angle `eta_degrees` around `axis`
/// anchored at `v_c`. Returns the kept set and whether the empty-result
/// fallback to the unfiltered set was taken.
pub fn filter_hypotheses(
    hypotheses: &[CalibrationHypothesis],
    axis: &Vector3<f64>,
    v_c: &Vector3<f64>,
    eta_degrees: f64,
) -> (Vec<CalibrationHypothesis>, bool) {
    let cos_eta = eta_degrees.to_radians().cos();
    let kept: Vec<CalibrationHypothesis> = hypotheses
        .iter()
        .filter(|h| {
            let d = h.position - v_c;
            let n = d.norm();
            n > 1e-12 && d.dot(axis) / n > cos_eta
        })
        .cloned()
        .collect();
    if kept.is_empty() && !hypotheses.is_empty() {
        (hypotheses.to_vec(), true)
    } else {
        (kept, false)
    }
}

/// Inlier-count-weighted mean position. When every hypothesis has zero
/// inliers, falls back to uniform weights (second return true).
pub fn merge_hypotheses(hypotheses: &[CalibrationHypothesis]) -> Result<(Vector3<f64>, bool)> {
    if hypotheses.is_empty() {
        return Err(CpsError::InvalidInput("cannot merge an empty hypothesis set".into()));
    }
    let total: f64 = hypotheses.iter().map(|h| h.inliers as f64).sum();
    if total > 0.0 {
        let mut p = Vector3::zeros();
        for h in hypotheses {
            p += h.position * (h.inliers as f64);
        }
        Ok((p / total, false))
    } else {
        let mut p = Vector3::zeros();
        for h in hypotheses {
            p += h.position;
        }
        Ok((p / hypotheses.len() as f64, true))
    }
}

fn collect_masked(
    image: &VectorMap,
    proxy_normals: &VectorMap,
    proxy_positions: &VectorMap,
    sample_mask: &[bool],
) -> Result<Vec<usize>> {
    if !(image.same_shape(proxy_normals) && image.same_shape(proxy_positions)) {
        return Err(CpsError::ShapeMismatch(format!(
            "image {}x{}, proxy normals {}x{}, proxy positions {}x{} must agree",
            image.width(),
            image.height(),
            proxy_normals.width(),
            proxy_normals.height(),
            proxy_positions.width(),
            proxy_positions.height()
        )));
    }
    if sample_mask.len() != image.len() {
        return Err(CpsError::ShapeMismatch(format!(
            "sampling mask has {} entries for a {}-pixel image",
            sample_mask.len(),
            image.len()
        )));
    }
    let masked: Vec<usize> = (0..image.len())
        .filter(|&i| {
            sample_mask[i]
                && image.is_valid(i)
                && proxy_normals.is_valid(i)
                && proxy_positions.is_valid(i)
        })
        .collect();
    if masked.len() < 100 {
        return Err(CpsError::InvalidInput(format!(
            "sampling mask covers {} usable pixels; calibration needs at least 100",
            masked.len()
        )));
    }
    Ok(masked)
}

/// Calibrate one light. `sample_mask` restricts the pixels used for sampling
/// and voting (the caller supplies a region free of non-Lambertian effects).
pub fn calibrate_light(
    light_index: usize,
    image: &VectorMap,
    proxy_normals: &VectorMap,
    proxy_positions: &VectorMap,
    sample_mask: &[bool],
    cfg: &CalibConfig,
) -> Result<CalibResult> {
    cfg.validate()?;
    let masked = collect_masked(image, proxy_normals, proxy_positions, sample_mask)?;
    let fail = |reason: String| CpsError::CalibrationFailed { light: light_index, reason };

    // Coarse directional estimate over the full masked set (all channels).
    let colors: Vec<Vector3<f64>> = masked.iter().map(|&i| image.data()[i]).collect();
    let normals: Vec<Vector3<f64>> = masked.iter().map(|&i| proxy_normals.data()[i]).collect();
    let cone_axis = fourpoint::light_directions(&colors, &normals)
        .map_err(|e| fail(format!("directional estimate failed: {e}")))?[light_index];

    // Scene anchor and scale from the whole proxy, not just the mask.
    let v_c = proxy_positions
        .mean_valid()
        .ok_or_else(|| fail("proxy position map has no valid pixels".into()))?;
    let mut radius = 0.0f64;
    for (_, p) in proxy_positions.iter_valid() {
        radius = radius.max((p - v_c).norm());
    }

    // Pixels usable for this light: masked and actually lit in its channel.
    // Shadowed pixels carry no equal-albedo constraint.
    let mut samples = Vec::new();
    let mut pixel_ids = Vec::new();
    for &i in &masked {
        let c = image.data()[i][light_index];
        if c > 0.0 {
            samples.push(CalibSample {
                intensity: c,
                position: proxy_positions.data()[i],
                normal: proxy_normals.data()[i],
            });
            pixel_ids.push(i);
        }
    }
    if samples.len() < 8 {
        return Err(fail(format!(
            "only {} lit masked pixels in channel {light_index}; need at least 8",
            samples.len()
        )));
    }

    // Voting subset. The stream index is shared across lights so that channel
    // permutations permute per-light results exactly.
    let voters: Vec<CalibSample> = if samples.len() > cfg.voting_limit {
        let mut rng = stream(cfg.seed, tags::VOTING, 0);
        let mut idx = rand::seq::index::sample(&mut rng, samples.len(), cfg.voting_limit).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| samples[i]).collect()
    } else {
        samples.clone()
    };

    // Pre-generated quadruplets, one seeded stream per iteration.
    let quadruplets: Vec<[usize; 4]> = (0..cfg.iterations)
        .map(|k| {
            let mut rng = stream(cfg.seed, tags::QUADRUPLETS, k as u64);
            let idx = rand::seq::index::sample(&mut rng, samples.len(), 4).into_vec();
            [idx[0], idx[1], idx[2], idx[3]]
        })
        .collect();

    let init = v_c + cone_axis * (2.0 * radius).max(1e-6);

    enum IterOutcome {
        Degenerate,
        Rejected,
        Hypothesis(CalibrationHypothesis),
    }

    let outcomes = exec::map_range(cfg.iterations, |k| {
        let q: [CalibSample; 4] = quadruplets[k].map(|i| samples[i]);
        match solve_hypothesis(&q, init, &cfg.lm) {
            Ok(out) => {
                let inliers = count_inliers(&out.position, &q, &voters, cfg.tau);
                IterOutcome::Hypothesis(CalibrationHypothesis {
                    position: out.position,
                    inliers,
                    quadruplet: quadruplets[k].map(|i| pixel_ids[i]),
                    objective: out.objective,
                    converged: out.converged,
                })
            }
            Err(CpsError::DegenerateGeometry(r)) if r.contains("duplicate") => {
                IterOutcome::Degenerate
            }
            Err(_) => IterOutcome::Rejected,
        }
    });

    let mut hypotheses = Vec::new();
    let mut degenerate = 0usize;
    let mut rejected = 0usize;
    for o in outcomes {
        match o {
            IterOutcome::Hypothesis(h) => hypotheses.push(h),
            IterOutcome::Degenerate => degenerate += 1,
            IterOutcome::Rejected => rejected += 1,
        }
    }
    if hypotheses.is_empty() {
        return Err(fail(format!(
            "no usable hypotheses from {} iterations ({degenerate} degenerate, {rejected} rejected)",
            cfg.iterations
        )));
    }

    // Best single hypothesis; ties resolved by iteration order.
    let mut vanilla = &hypotheses[0];
    for h in &hypotheses[1..] {
        if h.inliers > vanilla.inliers {
            vanilla = h;
        }
    }
    let (vanilla_position, vanilla_inliers) = (vanilla.position, vanilla.inliers);

    let (kept, filter_fallback) =
        filter_hypotheses(&hypotheses, &cone_axis, &v_c, cfg.eta_degrees);
    let (position, zero_weight_fallback) =
        merge_hypotheses(&kept).map_err(|e| fail(e.to_string()))?;

    let bucket = (voters.len() / 16) + 1;
    let mut inlier_histogram = vec![0usize; 16];
    for h in &hypotheses {
        inlier_histogram[(h.inliers / bucket).min(15)] += 1;
    }

    Ok(CalibResult {
        light_index,
        position,
        diagnostics: CalibDiagnostics {
            samples: samples.len(),
            voting_pixels: voters.len(),
            degenerate_quadruplets: degenerate,
            rejected_hypotheses: rejected,
            cone_axis,
            kept_after_filter: kept.len(),
            filter_fallback,
            zero_weight_fallback,
            vanilla_position,
            vanilla_inliers,
            inlier_histogram,
        },
        hypotheses,
    })
}

/// Calibrate all three lights and assemble a rig. Any per-light failure is an
/// error: downstream stages need the complete rig.
pub fn calibrate_all(
    image: &VectorMap,
    proxy_normals: &VectorMap,
    proxy_positions: &VectorMap,
    sample_mask: &[bool],
    cfg: &CalibConfig,
) -> Result<RigCalibration> {
    let mut lights = Vec::with_capacity(3);
    for light_index in 0..3 {
        lights.push(calibrate_light(
            light_index,
            image,
            proxy_normals,
            proxy_positions,
            sample_mask,
            cfg,
        )?);
    }
    let v_c = proxy_positions
        .mean_valid()
        .ok_or_else(|| CpsError::InvalidInput("proxy position map has no valid pixels".into()))?;
    let sources: [LightSource; 3] = std::array::from_fn(|i| {
        let p = lights[i].position;
        let from_scene = p - v_c;
        let dir = if from_scene.norm() > 1e-12 {
            from_scene.normalize()
        } else {
            Vector3::new(0.0, 0.0, 1.0)
        };
        LightSource {
            position: p,
            principal_direction: dir,
            anisotropy: 0.0,
        }
    });
    Ok(RigCalibration {
        rig: LightRig::new(sources)?,
        lights,
    })
}
