//! Albedo-norm histograms underlying the consensus and similarity energies.
//!
//! For one chromaticity candidate, the albedo norms of a reference pixel set
//! are binned with width `δ_b · median(norms)`. The consensus energy of a
//! query pixel is the fraction of reference pixels *outside* its bin; the
//! similarity energy averages profile distances against the bin's members.
//!
//! The reference set may be a subsample of the image, and bin member lists
//! may be capped for tractability. A query pixel that is itself part of the
//! reference set follows the literal definitions; an outside query is
//! treated as a virtual extra member of its bin (so the consensus fraction
//! stays below one and the similarity mean includes the self term).

use rand_chacha::ChaCha8Rng;

use crate::solver::profile::PixelProfile;

/// Binned albedo norms of the reference pixels for one candidate.
#[derive(Debug, Clone)]
pub struct CandidateBins {
    bin_width: f64,
    /// Reference-set size m.
    m: usize,
    /// Occupied bin indices, ascending.
    keys: Vec<i64>,
    /// Full occupancy per occupied bin (before any capping).
    counts: Vec<u32>,
    /// Per-bin (start, len) into `members`.
    spans: Vec<(u32, u32)>,
    /// Capped member lists (reference-pixel ids), each run sorted ascending.
    members: Vec<u32>,
}

impl CandidateBins {
    /// Bin the reference pixels' norms. `ids` and `norms` are parallel;
    /// norms must be positive and finite. Member lists longer than `cap`
    /// are subsampled with `rng` (bins processed in ascending index order,
    /// so equal seeds give equal samples). Returns `None` when the median
    /// norm is not positive — the candidate is unusable.
    pub fn build(
        ids: &[u32],
        norms: &[f64],
        delta_b: f64,
        cap: usize,
        rng: &mut ChaCha8Rng,
    ) -> Option<Self> {
        assert_eq!(ids.len(), norms.len());
        let m = ids.len();
        if m == 0 {
            return None;
        }
        // Upper median; a cheap deterministic selection.
        let mut sorted = norms.to_vec();
        let mid = m / 2;
        sorted.select_nth_unstable_by(mid, f64::total_cmp);
        let bin_width = delta_b * sorted[mid];
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return None;
        }

        let mut pairs: Vec<(i64, u32)> = ids
            .iter()
            .zip(norms)
            .map(|(&id, &n)| ((n / bin_width).floor() as i64, id))
            .collect();
        pairs.sort_unstable();

        let mut keys = Vec::new();
        let mut counts = Vec::new();
        let mut spans = Vec::new();
        let mut members = Vec::new();
        let mut i = 0;
        while i < m {
            let key = pairs[i].0;
            let mut j = i;
            while j < m && pairs[j].0 == key {
                j += 1;
            }
            let len = j - i;
            keys.push(key);
            counts.push(len as u32);
            let start = members.len() as u32;
            if len <= cap {
                members.extend(pairs[i..j].iter().map(|p| p.1));
            } else {
                let mut picked: Vec<usize> =
                    rand::seq::index::sample(rng, len, cap).into_iter().collect();
                picked.sort_unstable();
                members.extend(picked.into_iter().map(|k| pairs[i + k].1));
            }
            spans.push((start, (members.len() as u32) - start));
            i = j;
        }
        Some(Self {
            bin_width,
            m,
            keys,
            counts,
            spans,
            members,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Reference-set size m.
    pub fn reference_size(&self) -> usize {
        self.m
    }

    /// Sum of all bin occupancies — equals m by construction.
    pub fn total_binned(&self) -> usize {
        self.counts.iter().map(|c| *c as usize).sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.keys.len()
    }

    pub fn bin_index(&self, norm: f64) -> i64 {
        (norm / self.bin_width).floor() as i64
    }

    fn slot(&self, norm: f64) -> Option<usize> {
        self.keys.binary_search(&self.bin_index(norm)).ok()
    }

    /// Full occupancy of the query's bin (0 when the bin is empty).
    pub fn occupancy(&self, norm: f64) -> usize {
        self.slot(norm).map_or(0, |s| self.counts[s] as usize)
    }

    /// Consensus energy for a query with the given albedo norm.
    /// `in_reference` states whether the query pixel belongs to the
    /// reference set (and is therefore already counted in its bin).
    pub fn consensus(&self, norm: f64, in_reference: bool) -> f64 {
        let b = self.occupancy(norm);
        if in_reference {
            (self.m - b) as f64 / self.m as f64
        } else {
            // Virtual self: the query joins its bin and the reference set.
            (self.m - b) as f64 / (self.m + 1) as f64
        }
    }

    /// Capped member ids of the query's bin (empty when the bin is).
    pub fn members_of(&self, norm: f64) -> &[u32] {
        match self.slot(norm) {
            Some(s) => {
                let (start, len) = self.spans[s];
                &self.members[start as usize..(start + len) as usize]
            }
            None => &[],
        }
    }

    /// Similarity energy: mean profile distance from the query to its bin's
    /// members, with the query itself always counted once (contributing 0).
    pub fn similarity(
        &self,
        norm: f64,
        query_id: u32,
        query: &PixelProfile,
        profiles: &[PixelProfile],
    ) -> f64 {
        let members = self.members_of(norm);
        let mut sum = 0.0;
        for &a in members {
            if a != query_id {
                sum += query.distance(&profiles[a as usize]);
            }
        }
        let denom = if members.binary_search(&query_id).is_ok() {
            members.len()
        } else {
            members.len() + 1
        };
        sum / denom as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tags};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn rng() -> ChaCha8Rng {
        stream(0, tags::BIN_SAMPLE, 0)
    }

    fn profile(scale: f64) -> PixelProfile {
        PixelProfile::from_matrix(&(Matrix3::identity() * scale))
    }

    #[test]
    fn partition_covers_every_reference_pixel() {
        let ids: Vec<u32> = (0..500).collect();
        let mut r = stream(9, tags::BIN_SAMPLE, 1);
        let norms: Vec<f64> = (0..500)
            .map(|_| rand::Rng::random_range(&mut r, 0.2..3.0))
            .collect();
        let bins = CandidateBins::build(&ids, &norms, 0.025, 64, &mut rng()).unwrap();
        assert_eq!(bins.total_binned(), 500);
        // Every reference norm maps to an occupied bin.
        for n in &norms {
            assert!(bins.occupancy(*n) >= 1);
        }
    }

    #[test]
    fn median_and_width_hand_example() {
        let ids = [0, 1, 2, 3, 4];
        let norms = [1.0, 2.0, 3.0, 4.0, 100.0];
        let bins = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        assert_relative_eq!(bins.bin_width(), 0.075, epsilon = 1e-12);
    }

    #[test]
    fn consensus_extremes() {
        // All norms identical: one bin holds everyone.
        let ids: Vec<u32> = (0..10).collect();
        let norms = vec![1.0; 10];
        let bins = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        assert_relative_eq!(bins.consensus(1.0, true), 0.0);
        // A pixel alone in its bin.
        let norms: Vec<f64> = (0..10).map(|k| 1.0 + k as f64).collect();
        let bins = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        assert_relative_eq!(bins.consensus(1.0, true), 9.0 / 10.0);
    }

    #[test]
    fn outside_query_stays_below_one() {
        let ids: Vec<u32> = (0..4).collect();
        let norms = vec![1.0, 1.01, 2.0, 3.0];
        let bins = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        // Query far outside every occupied bin.
        let e = bins.consensus(50.0, false);
        assert!(e < 1.0);
        assert_relative_eq!(e, 4.0 / 5.0);
        assert!(bins.members_of(50.0).is_empty());
    }

    #[test]
    fn capping_preserves_counts_and_is_seeded() {
        let ids: Vec<u32> = (0..600).collect();
        let norms = vec![1.0; 600];
        let a = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        assert_eq!(a.occupancy(1.0), 600);
        assert_eq!(a.members_of(1.0).len(), 256);
        let b = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        assert_eq!(a.members_of(1.0), b.members_of(1.0));
        let mut other = stream(0, tags::BIN_SAMPLE, 1);
        let c = CandidateBins::build(&ids, &norms, 0.025, 256, &mut other).unwrap();
        assert_ne!(a.members_of(1.0), c.members_of(1.0));
        // Members remain sorted for the self-membership check.
        assert!(a.members_of(1.0).windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn similarity_examples() {
        let profiles = vec![profile(1.0), profile(1.0), profile(2.0)];
        let ids = [0u32, 1, 2];
        // All three in one bin.
        let norms = [1.0, 1.0, 1.0];
        let bins = CandidateBins::build(&ids, &norms, 0.1, 256, &mut rng()).unwrap();
        // Identical profiles: distance 0 even with a non-identical member.
        let d02 = profiles[0].distance(&profiles[2]);
        let e = bins.similarity(1.0, 0, &profiles[0], &profiles);
        assert_relative_eq!(e, d02 / 3.0, epsilon = 1e-12);
        // A pixel alone in its bin scores zero.
        let norms = [1.0, 5.0, 9.0];
        let bins = CandidateBins::build(&ids, &norms, 0.025, 256, &mut rng()).unwrap();
        assert_relative_eq!(bins.similarity(1.0, 0, &profiles[0], &profiles), 0.0);
        // Identical pixels in a shared bin score zero.
        let same = vec![profile(1.0); 3];
        let norms = [1.0, 1.0, 1.0];
        let bins = CandidateBins::build(&ids, &norms, 0.1, 256, &mut rng()).unwrap();
        assert_relative_eq!(bins.similarity(1.0, 1, &same[1], &same), 0.0);
    }

    #[test]
    fn outside_query_similarity_counts_virtual_self() {
        let profiles = vec![profile(1.0), profile(3.0), profile(5.0)];
        let ids = [0u32, 1];
        let norms = [1.0, 1.0];
        let bins = CandidateBins::build(&ids, &norms, 0.1, 256, &mut rng()).unwrap();
        let q = &profiles[2];
        let expect = (q.distance(&profiles[0]) + q.distance(&profiles[1])) / 3.0;
        assert_relative_eq!(bins.similarity(1.0, 2, q, &profiles), expect, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_norms_are_rejected() {
        let mut r = rng();
        assert!(CandidateBins::build(&[], &[], 0.025, 256, &mut r).is_none());
        let ids = [0u32, 1, 2];
        let zeros = [0.0, 0.0, 0.0];
        assert!(CandidateBins::build(&ids, &zeros, 0.025, 256, &mut r).is_none());
    }
}
