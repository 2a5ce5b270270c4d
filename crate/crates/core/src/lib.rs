//! Single-shot color photometric stereo with three uncalibrated near point lights.
//!
//! One RGB image, three colored point lights (red, green, blue) bound one-to-one
//! to the camera channels. The toolkit covers the full reconstruction path:
//!
//! - [`synth`]: render ground-truth Lambertian scenes under near point lighting
//!   (inverse-square falloff, attached shadows, optional anisotropy and channel
//!   crosstalk) to produce benchmark inputs with exact oracles.
//! - [`calib`]: self-calibrate the three light positions from a single image and
//!   a coarse proxy geometry, via quadruplet RANSAC with Levenberg-Marquardt
//!   refinement, cone filtering, and inlier-weighted hypothesis merging.
//! - [`solver`]: recover per-pixel albedo chromaticity by minimizing a consensus
//!   + similarity + proxy energy over a discretized chromaticity grid, then
//!   invert the shading model for albedo and normals.
//! - [`integrate`]: Poisson-integrate the normal map into depth on the masked
//!   domain; [`mesh`] exports OBJ/PLY.
//! - [`metrics`]: normal, light-position, and depth error measures.
//! - [`decrosstalk`]: estimate and apply a 3x3 de-crosstalk matrix from
//!   single-light white-target captures.
//! - [`pipeline`]: end-to-end orchestration with provenance and reports.
//!
//! All randomized stages take explicit seeds and produce identical results for
//! any thread count (see [`exec`]). Compile with `--no-default-features` for a
//! rayon-free sequential build.

pub mod calib;
pub mod decrosstalk;
mod error;
pub mod exec;
pub mod integrate;
pub mod io;
pub mod light;
pub mod map;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod solver;
pub mod synth;

pub use error::{CpsError, Result};
pub use light::{shading_matrix, Chromaticity, LightRig, LightSource};
pub use map::{normalize_map, ScalarMap, VectorMap};
