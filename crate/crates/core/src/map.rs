//! Dense per-pixel grids with a validity mask.
//!
//! Maps are row-major with the origin at the top-left pixel. The mask is the
//! single source of truth for the reconstruction domain: every consumer skips
//! pixels whose mask entry is false. Maps are immutable once built and safe to
//! share read-only across workers.

use nalgebra::Vector3;

use crate::error::{CpsError, Result};

macro_rules! masked_map {
    ($name:ident, $elem:ty, $zero:expr) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<$elem>,
            mask: Vec<bool>,
        }

        impl $name {
            /// All-valid map filled with `value`.
            pub fn filled(width: usize, height: usize, value: $elem) -> Self {
                Self {
                    width,
                    height,
                    data: vec![value; width * height],
                    mask: vec![true; width * height],
                }
            }

            /// Build from raw buffers; lengths must equal `width * height`.
            pub fn from_parts(
                width: usize,
                height: usize,
                data: Vec<$elem>,
                mask: Vec<bool>,
            ) -> Result<Self> {
                if data.len() != width * height || mask.len() != width * height {
                    return Err(CpsError::ShapeMismatch(format!(
                        "{}x{} map needs {} entries, got data={} mask={}",
                        width,
                        height,
                        width * height,
                        data.len(),
                        mask.len()
                    )));
                }
                Ok(Self { width, height, data, mask })
            }

            /// Evaluate `f(x, y)`; `None` marks the pixel invalid.
            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> Option<$elem>,
            ) -> Self {
                let mut data = Vec::with_capacity(width * height);
                let mut mask = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        match f(x, y) {
                            Some(v) => {
                                data.push(v);
                                mask.push(true);
                            }
                            None => {
                                data.push($zero);
                                mask.push(false);
                            }
                        }
                    }
                }
                Self { width, height, data, mask }
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            #[inline]
            pub fn index(&self, x: usize, y: usize) -> usize {
                debug_assert!(x < self.width && y < self.height);
                y * self.width + x
            }

            #[inline]
            pub fn coords(&self, i: usize) -> (usize, usize) {
                (i % self.width, i / self.width)
            }

            #[inline]
            pub fn is_valid(&self, i: usize) -> bool {
                self.mask[i]
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize) -> $elem {
                self.data[self.index(x, y)]
            }

            pub fn set(&mut self, x: usize, y: usize, v: $elem) {
                let i = self.index(x, y);
                self.data[i] = v;
            }

            pub fn set_valid(&mut self, x: usize, y: usize, valid: bool) {
                let i = self.index(x, y);
                self.mask[i] = valid;
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn mask(&self) -> &[bool] {
                &self.mask
            }

            pub fn mask_mut(&mut self) -> &mut [bool] {
                &mut self.mask
            }

            pub fn valid_count(&self) -> usize {
                self.mask.iter().filter(|&&m| m).count()
            }

            /// Flat indices of valid pixels, in row-major order.
            pub fn valid_indices(&self) -> Vec<usize> {
                self.mask
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &m)| m.then_some(i))
                    .collect()
            }

            /// Iterate `(flat_index, value)` over valid pixels.
            pub fn iter_valid(&self) -> impl Iterator<Item = (usize, &$elem)> + '_ {
                self.data
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| self.mask[i])
            }

            pub fn same_shape(&self, other: &Self) -> bool {
                self.width == other.width && self.height == other.height
            }

            /// Restrict the mask to pixels valid in both maps.
            pub fn intersect_mask(&mut self, other: &[bool]) {
                assert_eq!(self.mask.len(), other.len());
                for (m, &o) in self.mask.iter_mut().zip(other) {
                    *m = *m && o;
                }
            }
        }
    };
}

masked_map!(ScalarMap, f64, 0.0);
masked_map!(VectorMap, Vector3<f64>, Vector3::new(0.0, 0.0, 0.0));

impl VectorMap {
    /// Check the unit-length invariant of a normal map over valid pixels.
    pub fn assert_unit_normals(&self, tol: f64) -> Result<()> {
        let mut worst: Option<(usize, f64)> = None;
        for (i, v) in self.iter_valid() {
            let dev = (v.norm() - 1.0).abs();
            if worst.is_none_or(|(_, w)| dev > w) {
                worst = Some((i, dev));
            }
        }
        if let Some((i, dev)) = worst {
            if dev > tol {
                let (x, y) = self.coords(i);
                return Err(CpsError::BadPixel {
                    x,
                    y,
                    reason: format!("normal deviates from unit length by {dev:.3e}"),
                });
            }
        }
        Ok(())
    }

    /// Mean value over valid pixels.
    pub fn mean_valid(&self) -> Option<Vector3<f64>> {
        let mut sum = Vector3::zeros();
        let mut n = 0usize;
        for (_, v) in self.iter_valid() {
            sum += v;
            n += 1;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Rescale every valid vector to unit length. Zero vectors at valid pixels are
/// invalidated in the output mask; the second return is how many were dropped.
pub fn normalize_map(m: &VectorMap) -> (VectorMap, usize) {
    let mut out = m.clone();
    let mut dropped = 0usize;
    for i in 0..out.len() {
        if !out.is_valid(i) {
            continue;
        }
        let n = out.data()[i].norm();
        if n > 0.0 && n.is_finite() {
            out.data_mut()[i] /= n;
        } else {
            out.mask_mut()[i] = false;
            dropped += 1;
        }
    }
    (out, dropped)
}
