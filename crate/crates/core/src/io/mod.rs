//! File formats: portable float maps for float-valued grids, PNG for input
//! images and masks, JSON for rigs, matrices, and reports.

pub mod json;
pub mod pfm;
pub mod png;

pub use json::{load_json, save_json, MatrixFile, RigFile};
pub use pfm::{read_scalar_pfm, read_vector_pfm, write_scalar_pfm, write_vector_pfm};
pub use png::{load_image_png, load_mask_png, save_mask_png, save_preview_png};
