//! Discretized albedo-chromaticity candidates.
//!
//! Chromaticities are unit 3-vectors in the non-negative octant, sampled in
//! spherical coordinates at one-degree steps over {0°..90°} × {0°..90°}.
//! The polar angle θ measures from the +z (blue) axis and the azimuth φ from
//! the +x (red) axis, so a candidate is
//! `(sin θ cos φ, sin θ sin φ, cos θ)`.
//!
//! The raw 91×91 grid contains 91 copies of the pole (θ = 0) which collapse
//! to one entry, and rows/columns with a zero component (θ ∈ {0°, 90°} or
//! φ ∈ {0°, 90°}) whose componentwise reciprocal — needed to evaluate albedo
//! norms — is undefined. The working grid therefore keeps the 89×89 = 7921
//! strictly positive candidates.

use nalgebra::Vector3;

/// Candidate chromaticity directions with precomputed reciprocals.
#[derive(Debug, Clone)]
pub struct ChromaticityGrid {
    candidates: Vec<Vector3<f64>>,
    reciprocals: Vec<Vector3<f64>>,
    /// (θ, φ) in whole degrees for each candidate.
    angles: Vec<(u8, u8)>,
}

fn unit_from_degrees(theta: u8, phi: u8) -> Vector3<f64> {
    let t = (theta as f64).to_radians();
    let p = (phi as f64).to_radians();
    Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
}

/// All 91×91 grid points including duplicates and boundary entries; only
/// used to characterize the raw grid in tests and documentation.
pub fn raw_grid() -> Vec<Vector3<f64>> {
    let mut v = Vec::with_capacity(91 * 91);
    for theta in 0..=90u8 {
        for phi in 0..=90u8 {
            v.push(unit_from_degrees(theta, phi));
        }
    }
    v
}

impl ChromaticityGrid {
    /// The working grid: strictly positive candidates in (θ, φ) row-major
    /// order, θ and φ each spanning 1°..=89°.
    pub fn standard() -> Self {
        let mut candidates = Vec::with_capacity(89 * 89);
        let mut angles = Vec::with_capacity(89 * 89);
        for theta in 1..=89u8 {
            for phi in 1..=89u8 {
                candidates.push(unit_from_degrees(theta, phi));
                angles.push((theta, phi));
            }
        }
        let reciprocals = candidates
            .iter()
            .map(|c| Vector3::new(1.0 / c.x, 1.0 / c.y, 1.0 / c.z))
            .collect();
        Self {
            candidates,
            reciprocals,
            angles,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidate(&self, j: usize) -> Vector3<f64> {
        self.candidates[j]
    }

    pub fn reciprocal(&self, j: usize) -> Vector3<f64> {
        self.reciprocals[j]
    }

    pub fn angles(&self, j: usize) -> (u8, u8) {
        self.angles[j]
    }

    pub fn candidates(&self) -> &[Vector3<f64>] {
        &self.candidates
    }

    /// Index of the candidate with maximal dot product against `dir`
    /// (`dir` need not be normalized; ties resolve to the lowest index).
    pub fn nearest(&self, dir: &Vector3<f64>) -> usize {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (j, c) in self.candidates.iter().enumerate() {
            let d = c.dot(dir);
            if d > best.0 {
                best = (d, j);
            }
        }
        best.1
    }
}
