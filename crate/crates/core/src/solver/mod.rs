//! Per-pixel albedo chromaticity and normal estimation.
//!
//! Color photometric stereo under three calibrated lights is underdetermined
//! per pixel: three intensities constrain five unknowns (albedo 3-vector and
//! unit normal). Fixing an albedo chromaticity candidate makes the pixel
//! linear and exactly solvable, so the solver scores every candidate on a
//! discretized grid and keeps the minimizer of
//!
//! `E_c + λ_s·w_s·E_s + λ_p·w_p·E_p`
//!
//! where the consensus term `E_c` rewards candidates under which many pixels
//! share the same albedo norm, the similarity term `E_s` rewards bins whose
//! members have similar linear profiles (likely equal true albedo), and the
//! proxy term `E_p` penalizes chromaticities far from the one implied by the
//! proxy geometry. The weights `w_s`, `w_p` gate the auxiliary terms to the
//! pixels where they are trustworthy. Ablation settings reproduce the
//! consensus-only baseline and the intermediate consensus+similarity
//! variant for comparisons.

pub mod grid;
pub mod histogram;
pub mod profile;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CpsError, Result};
use crate::exec;
use crate::light::{shading_matrix, LightRig};
use crate::map::{ScalarMap, VectorMap};
use crate::rng::{stream, tags};
pub use grid::ChromaticityGrid;
use histogram::CandidateBins;
use profile::{pixel_matrix, proxy_chromaticity, PixelProfile};

/// Energy terms included in the per-pixel minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Consensus term only.
    Consensus,
    /// Consensus plus weighted similarity.
    ConsensusSimilarity,
    /// All three terms; requires proxy normals.
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Histogram bin width as a fraction of the median albedo norm.
    pub delta_b: f64,
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub sigma_s: f64,
    pub sigma_p: f64,
    pub ablation: Ablation,
    /// Reference-pixel budget for histograms and similarity statistics;
    /// images with at most this many solvable pixels use exact statistics.
    pub stats_subset: usize,
    /// Cap on stored bin members for the similarity energy.
    pub bin_member_cap: usize,
    /// Pixels whose local shading matrix is worse-conditioned are skipped.
    pub condition_limit: f64,
    pub seed: u64,
    pub collect_diagnostics: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta_b: 0.025,
            lambda_s: 1.5,
            lambda_p: 0.5,
            sigma_s: 0.003,
            sigma_p: 0.01,
            ablation: Ablation::Full,
            stats_subset: 20_000,
            bin_member_cap: 256,
            condition_limit: 1e8,
            seed: 0,
            collect_diagnostics: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("delta_b", self.delta_b),
            ("lambda_s", self.lambda_s),
            ("lambda_p", self.lambda_p),
            ("sigma_s", self.sigma_s),
            ("sigma_p", self.sigma_p),
            ("condition_limit", self.condition_limit),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CpsError::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.stats_subset == 0 || self.bin_member_cap == 0 {
            return Err(CpsError::InvalidInput(
                "stats_subset and bin_member_cap must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Gate for the similarity term: pixels whose best bin is much less
/// coherent than the best bin anywhere get exponentially less weight.
pub fn similarity_weight(min_es: f64, global_min_es: f64, sigma_s: f64) -> f64 {
    let gap = min_es - global_min_es;
    (-(gap * gap) / (sigma_s * sigma_s)).exp()
}

/// Gate for the proxy term: strong when the consensus-only estimate
/// deviates far from the proxy chromaticity (ratio of best-possible to
/// consensus proxy energy near zero), vanishing when they already agree.
pub fn proxy_weight(min_ep: f64, ep_at_consensus: f64, sigma_p: f64) -> f64 {
    if ep_at_consensus <= 1e-12 {
        // Consensus equals the proxy: the prior has nothing to add.
        return 0.0;
    }
    let ratio = min_ep / ep_at_consensus;
    (-(ratio * ratio) / (sigma_p * sigma_p)).exp()
}

/// Solved per-pixel quantities. Pixels that were valid in the inputs but
/// unsolvable (zero or negative color, degenerate shading, no usable
/// candidate) are invalid in every output map and counted.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub normals: VectorMap,
    /// Full albedo ρ = ρ̃·ρ̂.
    pub albedo: VectorMap,
    /// Unit chromaticity ρ̂ of the winning candidate.
    pub chromaticity: VectorMap,
    /// Winning candidate index per pixel; -1 where unsolved.
    pub candidate_index: Vec<i64>,
    pub unsolved_pixels: usize,
    pub diagnostics: Option<SolverDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct SolverDiagnostics {
    /// Consensus energy of the winning candidate.
    pub consensus_energy: ScalarMap,
    pub similarity_weight: ScalarMap,
    pub proxy_weight: ScalarMap,
    /// Reference pixels actually used for statistics.
    pub subset_size: usize,
}

/// Running per-pixel state over the candidate scan.
#[derive(Debug, Clone, Copy)]
struct ScanState {
    best_ec: f64,
    best_ec_j: i64,
    min_es: f64,
    best_proxy_dot: f64,
    /// Final-energy argmin (second scan).
    best_e: f64,
    best_j: i64,
    winner_ec: f64,
}

impl ScanState {
    fn new() -> Self {
        Self {
            best_ec: f64::INFINITY,
            best_ec_j: -1,
            min_es: f64::INFINITY,
            best_proxy_dot: f64::NEG_INFINITY,
            best_e: f64::INFINITY,
            best_j: -1,
            winner_ec: f64::NAN,
        }
    }
}

const SCAN_CHUNK: usize = 512;

/// Estimate chromaticity, albedo, and normals for every solvable pixel.
///
/// `positions` supplies per-pixel scene points for near-light shading;
/// `proxy_normals` is required for [`Ablation::Full`] and ignored otherwise.
pub fn solve(
    image: &VectorMap,
    rig: &LightRig,
    positions: &VectorMap,
    proxy_normals: Option<&VectorMap>,
    cfg: &SolverConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    rig.validate()?;
    if !image.same_shape(positions) {
        return Err(CpsError::ShapeMismatch(format!(
            "image {}x{} vs positions {}x{}",
            image.width(),
            image.height(),
            positions.width(),
            positions.height()
        )));
    }
    if let Some(pn) = proxy_normals {
        if !image.same_shape(pn) {
            return Err(CpsError::ShapeMismatch(format!(
                "image {}x{} vs proxy normals {}x{}",
                image.width(),
                image.height(),
                pn.width(),
                pn.height()
            )));
        }
    }
    let use_sim = matches!(cfg.ablation, Ablation::ConsensusSimilarity | Ablation::Full);
    let use_proxy = matches!(cfg.ablation, Ablation::Full);
    let proxy = match (use_proxy, proxy_normals) {
        (true, None) => {
            return Err(CpsError::InvalidInput(
                "full energy requires proxy normals".to_string(),
            ))
        }
        (true, Some(pn)) => Some(pn),
        (false, _) => None,
    };

    // Collect solvable pixels into dense arrays.
    let n_pixels = image.len();
    let mut pixel_of: Vec<u32> = Vec::new();
    let mut profiles: Vec<PixelProfile> = Vec::new();
    let mut rho_p: Vec<Option<Vector3<f64>>> = Vec::new();
    let mut unsolved = 0usize;
    for i in 0..n_pixels {
        if !(image.is_valid(i) && positions.is_valid(i)) {
            continue;
        }
        let c = image.data()[i];
        if !(c.iter().all(|v| v.is_finite() && *v >= 0.0) && c.iter().any(|v| *v > 0.0)) {
            unsolved += 1;
            continue;
        }
        let l = match shading_matrix(rig, &positions.data()[i]) {
            Ok(l) => l,
            Err(_) => {
                unsolved += 1;
                continue;
            }
        };
        let h = match pixel_matrix(&c, &l, cfg.condition_limit) {
            Ok(h) => h,
            Err(_) => {
                unsolved += 1;
                continue;
            }
        };
        if let Some(pn) = proxy {
            rho_p.push(if pn.is_valid(i) {
                proxy_chromaticity(&c, &l, &pn.data()[i])
            } else {
                None
            });
        }
        pixel_of.push(i as u32);
        profiles.push(PixelProfile::from_matrix(&h));
    }
    let n_valid = pixel_of.len();
    if n_valid == 0 {
        return Err(CpsError::InvalidInput(
            "no solvable pixels in the masked image".to_string(),
        ));
    }

    let grid = ChromaticityGrid::standard();

    // Reference subset for statistics (dense ids, ascending).
    let take = cfg.stats_subset.min(n_valid);
    let mut subset: Vec<u32> = rand::seq::index::sample(
        &mut stream(cfg.seed, tags::STATS_SUBSET, 0),
        n_valid,
        take,
    )
    .into_iter()
    .map(|k| k as u32)
    .collect();
    subset.sort_unstable();
    let mut in_subset = vec![false; n_valid];
    for &s in &subset {
        in_subset[s as usize] = true;
    }

    let mut state = vec![ScanState::new(); n_valid];

    // First scan: consensus argmin, per-pixel minimum similarity energy,
    // and the best proxy-energy candidate. For consensus-only runs this is
    // already the final answer.
    scan_candidates(
        &grid,
        &subset,
        &profiles,
        &in_subset,
        &rho_p,
        cfg,
        use_sim,
        use_proxy,
        None,
        &mut state,
    );

    let (w_s, w_p) = if use_sim || use_proxy {
        let mut w_s = vec![1.0f64; n_valid];
        if use_sim {
            let global_min = state
                .iter()
                .map(|s| s.min_es)
                .fold(f64::INFINITY, f64::min);
            for (d, s) in state.iter().enumerate() {
                w_s[d] = similarity_weight(s.min_es, global_min, cfg.sigma_s);
            }
        }
        let mut w_p = vec![0.0f64; n_valid];
        if use_proxy {
            for (d, s) in state.iter().enumerate() {
                if let Some(rp) = rho_p[d] {
                    if s.best_ec_j >= 0 {
                        let min_ep = (1.0 - s.best_proxy_dot).max(0.0);
                        let ep_c = 1.0 - rp.dot(&grid.candidate(s.best_ec_j as usize));
                        w_p[d] = proxy_weight(min_ep, ep_c, cfg.sigma_p);
                    }
                }
            }
        }
        (w_s, w_p)
    } else {
        (Vec::new(), Vec::new())
    };

    // Second scan: argmin of the gated total energy.
    if use_sim || use_proxy {
        scan_candidates(
            &grid,
            &subset,
            &profiles,
            &in_subset,
            &rho_p,
            cfg,
            use_sim,
            use_proxy,
            Some((&w_s, &w_p)),
            &mut state,
        );
    }

    // Recovery: ρ̃·n = H·ρ̂' at the winning candidate.
    let (w, h) = (image.width(), image.height());
    let mut normals = VectorMap::from_parts(w, h, vec![Vector3::zeros(); n_pixels], vec![false; n_pixels])?;
    let mut albedo = normals.clone();
    let mut chromaticity = normals.clone();
    let mut candidate_index = vec![-1i64; n_pixels];
    let mut winner_ec = vec![f64::NAN; n_valid];
    for d in 0..n_valid {
        let i = pixel_of[d] as usize;
        let s = &state[d];
        let (j, ec) = if use_sim || use_proxy {
            (s.best_j, s.winner_ec)
        } else {
            (s.best_ec_j, s.best_ec)
        };
        if j < 0 {
            unsolved += 1;
            continue;
        }
        let recip = grid.reciprocal(j as usize);
        let sn = profiles[d].scaled_normal(&recip);
        let norm = sn.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            unsolved += 1;
            continue;
        }
        let cand = grid.candidate(j as usize);
        let (x, y) = image.coords(i);
        normals.set(x, y, sn / norm);
        normals.set_valid(x, y, true);
        albedo.set(x, y, norm * cand);
        albedo.set_valid(x, y, true);
        chromaticity.set(x, y, cand);
        chromaticity.set_valid(x, y, true);
        candidate_index[i] = j;
        winner_ec[d] = ec;
    }

    let diagnostics = if cfg.collect_diagnostics {
        let mut ec_map = ScalarMap::from_parts(w, h, vec![0.0; n_pixels], vec![false; n_pixels])?;
        let mut ws_map = ec_map.clone();
        let mut wp_map = ec_map.clone();
        for d in 0..n_valid {
            let i = pixel_of[d] as usize;
            if candidate_index[i] < 0 {
                continue;
            }
            let (x, y) = image.coords(i);
            ec_map.set(x, y, winner_ec[d]);
            ec_map.set_valid(x, y, true);
            ws_map.set(x, y, if w_s.is_empty() { 1.0 } else { w_s[d] });
            ws_map.set_valid(x, y, true);
            wp_map.set(x, y, if w_p.is_empty() { 0.0 } else { w_p[d] });
            wp_map.set_valid(x, y, true);
        }
        Some(SolverDiagnostics {
            consensus_energy: ec_map,
            similarity_weight: ws_map,
            proxy_weight: wp_map,
            subset_size: take,
        })
    } else {
        None
    };

    Ok(Reconstruction {
        normals,
        albedo,
        chromaticity,
        candidate_index,
        unsolved_pixels: unsolved,
        diagnostics,
    })
}

/// One pass over all candidates, updating per-pixel running minima.
/// Without `weights` this fills the consensus argmin / min-E_s / proxy-dot
/// fields; with `weights = (w_s, w_p)` it fills the total-energy argmin.
#[allow(clippy::too_many_arguments)]
fn scan_candidates(
    grid: &ChromaticityGrid,
    subset: &[u32],
    profiles: &[PixelProfile],
    in_subset: &[bool],
    rho_p: &[Option<Vector3<f64>>],
    cfg: &SolverConfig,
    use_sim: bool,
    use_proxy: bool,
    weights: Option<(&[f64], &[f64])>,
    state: &mut [ScanState],
) {
    for j in 0..grid.len() {
        let recip = grid.reciprocal(j);
        let cand = grid.candidate(j);
        let norms: Vec<f64> = exec::map_range(subset.len(), |si| {
            profiles[subset[si] as usize].albedo_norm(&recip)
        });
        let mut rng = stream(cfg.seed, tags::BIN_SAMPLE, j as u64);
        let Some(bins) =
            CandidateBins::build(subset, &norms, cfg.delta_b, cfg.bin_member_cap, &mut rng)
        else {
            continue;
        };
        exec::for_each_chunk(state, SCAN_CHUNK, |chunk_idx, chunk| {
            let base = chunk_idx * SCAN_CHUNK;
            for (k, s) in chunk.iter_mut().enumerate() {
                let d = base + k;
                let p = &profiles[d];
                let norm = p.albedo_norm(&recip);
                let ec = bins.consensus(norm, in_subset[d]);
                match weights {
                    None => {
                        if ec < s.best_ec {
                            s.best_ec = ec;
                            s.best_ec_j = j as i64;
                        }
                        if use_sim {
                            let es = bins.similarity(norm, d as u32, p, profiles);
                            if es < s.min_es {
                                s.min_es = es;
                            }
                        }
                        if use_proxy {
                            if let Some(rp) = &rho_p[d] {
                                let dot = rp.dot(&cand);
                                if dot > s.best_proxy_dot {
                                    s.best_proxy_dot = dot;
                                }
                            }
                        }
                    }
                    Some((w_s, w_p)) => {
                        let mut e = ec;
                        if use_sim && w_s[d] > 0.0 {
                            e += cfg.lambda_s
                                * w_s[d]
                                * bins.similarity(norm, d as u32, p, profiles);
                        }
                        if use_proxy && w_p[d] > 0.0 {
                            if let Some(rp) = &rho_p[d] {
                                e += cfg.lambda_p * w_p[d] * (1.0 - rp.dot(&cand));
                            }
                        }
                        if e < s.best_e {
                            s.best_e = e;
                            s.best_j = j as i64;
                            s.winner_ec = ec;
                        }
                    }
                }
            }
        });
    }
}
