//! Depth from normals by Poisson integration on the masked pixel grid.
//!
//! A recovered normal (n_x, n_y, n_z) implies the orthographic depth
//! gradient p = −n_x/n_z, q = −n_y/n_z. Integration finds the depth map
//! whose finite differences best match those gradients in least squares:
//! every 4-neighbor edge contributes one equation whose target is the
//! averaged endpoint slope, which yields the standard 5-point Poisson
//! system with natural (Neumann) boundaries on the mask. Each 4-connected
//! mask component is solved independently with matrix-free conjugate
//! gradients, and the constant left undetermined per component (the gauge)
//! is fixed by forcing its mean depth to zero.
//!
//! Image rows grow downward while the scene y axis grows upward, so the
//! step from a pixel to the one below it moves −pitch in scene y.

use crate::error::{CpsError, Result};
use crate::exec;
use crate::map::{ScalarMap, VectorMap};

/// Pixels with |n_z| at or below this are treated as unintegrable: their
/// implied slope exceeds ~1000:1 and would dominate the least squares.
pub const MIN_NORMAL_Z: f64 = 1e-3;

/// 4-connected components smaller than this are dropped rather than solved;
/// slivers this small are usually cut off by the |n_z| threshold and carry
/// no useful geometry.
pub const MIN_COMPONENT_PIXELS: usize = 16;

const RELATIVE_RESIDUAL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 10_000;

/// Orthographic depth gradients implied by a normal map.
#[derive(Debug, Clone)]
pub struct GradientField {
    /// dz/dx per pixel; valid where the normal is valid and |n_z| is usable.
    pub p: ScalarMap,
    /// dz/dy per pixel, same mask as `p`.
    pub q: ScalarMap,
}

impl GradientField {
    /// Convert unit normals to gradients, excluding near-horizontal normals.
    pub fn from_normals(normals: &VectorMap) -> Self {
        let (w, h) = (normals.width(), normals.height());
        let mut p = ScalarMap::filled(w, h, 0.0);
        let mut q = ScalarMap::filled(w, h, 0.0);
        for i in 0..normals.len() {
            let (x, y) = normals.coords(i);
            let n = normals.data()[i];
            if normals.is_valid(i) && n.z.abs() > MIN_NORMAL_Z {
                p.set(x, y, -n.x / n.z);
                q.set(x, y, -n.y / n.z);
                p.set_valid(x, y, true);
                q.set_valid(x, y, true);
            } else {
                p.set_valid(x, y, false);
                q.set_valid(x, y, false);
            }
        }
        Self { p, q }
    }
}

/// Integration result with domain bookkeeping.
#[derive(Debug, Clone)]
pub struct Integration {
    /// Depth per pixel, mean 0 over each solved component.
    pub depth: ScalarMap,
    /// Number of components actually solved.
    pub components: usize,
    /// Pixels discarded because their component was below the size floor.
    pub dropped_pixels: usize,
}

/// Poisson-integrate a normal map into depth. `pixel_pitch` is the scene
/// distance between adjacent pixel centers.
pub fn integrate(normals: &VectorMap, pixel_pitch: f64) -> Result<ScalarMap> {
    integrate_detailed(normals, pixel_pitch).map(|i| i.depth)
}

/// As [`integrate`], also reporting component and drop counts.
pub fn integrate_detailed(normals: &VectorMap, pixel_pitch: f64) -> Result<Integration> {
    if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "pixel pitch must be positive and finite, got {pixel_pitch}"
        )));
    }
    let field = GradientField::from_normals(normals);
    let (w, h) = (normals.width(), normals.height());

    let (components, dropped_pixels) = connected_components(&field.p);
    if components.is_empty() && dropped_pixels == 0 {
        return Err(CpsError::InvalidInput(
            "no integrable pixels (empty mask or all normals near-horizontal)".into(),
        ));
    }
    if components.is_empty() {
        return Err(CpsError::InvalidInput(format!(
            "every 4-connected component is smaller than {MIN_COMPONENT_PIXELS} pixels"
        )));
    }

    // Disjoint components share one local-index table, built up front so the
    // solves can run in parallel over read-only adjacency data.
    let mut label = vec![-1i64; w * h];
    let mut local = vec![0u32; w * h];
    for (k, comp) in components.iter().enumerate() {
        for (j, &g) in comp.iter().enumerate() {
            label[g as usize] = k as i64;
            local[g as usize] = j as u32;
        }
    }

    let solved = exec::map_range(components.len(), |k| {
        solve_component(k, &components[k], &field, &label, &local, w, pixel_pitch)
    });

    let mut depth = ScalarMap::filled(w, h, 0.0);
    for i in 0..depth.len() {
        let (x, y) = depth.coords(i);
        depth.set_valid(x, y, false);
    }
    for (k, result) in solved.into_iter().enumerate() {
        let z = result?;
        for (j, &g) in components[k].iter().enumerate() {
            let (x, y) = depth.coords(g as usize);
            depth.set(x, y, z[j]);
            depth.set_valid(x, y, true);
        }
    }
    Ok(Integration {
        depth,
        components: components.len(),
        dropped_pixels,
    })
}

/// 4-connected components of the valid mask, each sorted by pixel index;
/// components under the size floor are dropped and counted.
fn connected_components(mask: &ScalarMap) -> (Vec<Vec<u32>>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut dropped = 0usize;
    for start in 0..w * h {
        if seen[start] || !mask.is_valid(start) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start as u32];
        seen[start] = true;
        while let Some(g) = stack.pop() {
            comp.push(g);
            let (x, y) = mask.coords(g as usize);
            let mut push = |xn: usize, yn: usize| {
                let gn = mask.index(xn, yn);
                if !seen[gn] && mask.is_valid(gn) {
                    seen[gn] = true;
                    stack.push(gn as u32);
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if x + 1 < w {
                push(x + 1, y);
            }
            if y > 0 {
                push(x, y - 1);
            }
            if y + 1 < h {
                push(x, y + 1);
            }
        }
        if comp.len() >= MIN_COMPONENT_PIXELS {
            comp.sort_unstable();
            components.push(comp);
        } else {
            dropped += comp.len();
        }
    }
    (components, dropped)
}

/// Solve one component's Poisson system. Right edges target
/// pitch·(p_a+p_b)/2 and down edges target −pitch·(q_a+q_b)/2 (image rows
/// run against scene y). The normal equations give the graph Laplacian,
/// and conjugate gradients stays on the subspace orthogonal to constants
/// because the right-hand side sums to zero edge by edge.
fn solve_component(
    component_id: usize,
    pixels: &[u32],
    field: &GradientField,
    label: &[i64],
    local: &[u32],
    width: usize,
    pitch: f64,
) -> Result<Vec<f64>> {
    let n = pixels.len();
    let my_label = label[pixels[0] as usize];
    let mut neighbors = vec![[-1i64; 4]; n];
    let mut b = vec![0.0f64; n];
    let p = field.p.data();
    let q = field.q.data();

    for (a, &ga) in pixels.iter().enumerate() {
        let g = ga as usize;
        let (x, y) = field.p.coords(g);
        let mut link = |slot: usize, gn: usize| -> Option<usize> {
            if label[gn] == my_label {
                neighbors[a][slot] = local[gn] as i64;
                Some(local[gn] as usize)
            } else {
                None
            }
        };
        if x > 0 {
            link(0, g - 1);
        }
        if x + 1 < width {
            if let Some(r) = link(1, g + 1) {
                let t = pitch * 0.5 * (p[g] + p[g + 1]);
                b[a] -= t;
                b[r] += t;
            }
        }
        if y > 0 {
            link(2, g - width);
        }
        if let Some(gn) = g.checked_add(width) {
            if gn < label.len() {
                if let Some(d) = link(3, gn) {
                    let t = -pitch * 0.5 * (q[g] + q[gn]);
                    b[a] -= t;
                    b[d] += t;
                }
            }
        }
    }

    // Project out the constant mode, then fix the gauge at the end.
    let mean_b = b.iter().sum::<f64>() / n as f64;
    for v in &mut b {
        *v -= mean_b;
    }
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut z = vec![0.0f64; n];
    if norm_b == 0.0 {
        return Ok(z);
    }

    let apply = |v: &[f64], out: &mut [f64]| {
        for a in 0..n {
            let mut acc = 0.0;
            let mut deg = 0.0;
            for &nb in &neighbors[a] {
                if nb >= 0 {
                    acc += v[nb as usize];
                    deg += 1.0;
                }
            }
            out[a] = deg * v[a] - acc;
        }
    };

    let mut r = b.clone();
    let mut dir = r.clone();
    let mut ad = vec![0.0f64; n];
    let mut rs = norm_b * norm_b;
    for _ in 0..MAX_ITERATIONS {
        apply(&dir, &mut ad);
        let dad = dir.iter().zip(&ad).map(|(a, b)| a * b).sum::<f64>();
        if !(dad > 0.0) {
            return Err(CpsError::SingularSystem {
                component: component_id,
            });
        }
        let alpha = rs / dad;
        for a in 0..n {
            z[a] += alpha * dir[a];
            r[a] -= alpha * ad[a];
        }
        let rs_next = r.iter().map(|v| v * v).sum::<f64>();
        if rs_next.sqrt() <= RELATIVE_RESIDUAL * norm_b {
            let mean_z = z.iter().sum::<f64>() / n as f64;
            for v in &mut z {
                *v -= mean_z;
            }
            return Ok(z);
        }
        let beta = rs_next / rs;
        rs = rs_next;
        for a in 0..n {
            dir[a] = r[a] + beta * dir[a];
        }
    }
    Err(CpsError::SingularSystem {
        component: component_id,
    })
}
