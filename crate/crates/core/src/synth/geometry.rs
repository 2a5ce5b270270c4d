//! Analytic test surfaces with exact normals and positions.
//!
//! All surfaces live in a right-handed camera frame: +x to the image right,
//! +y up (toward lower image row indices), +z toward the camera, orthographic
//! projection. The image footprint spans [-0.5, 0.5]² in scene units, so one
//! scene unit equals the vertical extent of the rendered target; light
//! distances are expressed in the same unit.

use nalgebra::{Vector2, Vector3};
use rand::Rng;

use crate::error::{CpsError, Result};
use crate::map::VectorMap;
use crate::rng::{stream, tags};

/// Surface maps plus the sample pitch (scene units between pixel centers).
#[derive(Debug, Clone)]
pub struct Geometry {
    pub normals: VectorMap,
    pub positions: VectorMap,
    pub pitch: f64,
}

/// Scene-space coordinates of a pixel center.
pub fn pixel_center(x: usize, y: usize, res: usize) -> Vector2<f64> {
    let step = 1.0 / res as f64;
    Vector2::new(
        (x as f64 + 0.5) * step - 0.5,
        0.5 - (y as f64 + 0.5) * step,
    )
}

fn check_res(res: usize) -> Result<()> {
    if res < 2 {
        return Err(CpsError::InvalidInput(format!(
            "resolution must be at least 2, got {res}"
        )));
    }
    Ok(())
}

/// Height-field surface z = f(x, y) with analytic gradient (df/dx, df/dy).
/// The outward normal is (-z_x, -z_y, 1) normalized. Returning `None` marks
/// the pixel invalid, so callers can build surfaces over partial footprints.
pub fn height_field(
    res: usize,
    mut f: impl FnMut(f64, f64) -> Option<(f64, f64, f64)>,
) -> Result<Geometry> {
    check_res(res)?;
    let mut normals = VectorMap::filled(res, res, Vector3::zeros());
    let mut positions = VectorMap::filled(res, res, Vector3::zeros());
    for y in 0..res {
        for x in 0..res {
            let p = pixel_center(x, y, res);
            match f(p.x, p.y) {
                Some((z, zx, zy)) => {
                    positions.set(x, y, Vector3::new(p.x, p.y, z));
                    normals.set(x, y, Vector3::new(-zx, -zy, 1.0).normalize());
                }
                None => {
                    positions.set_valid(x, y, false);
                    normals.set_valid(x, y, false);
                }
            }
        }
    }
    Ok(Geometry {
        normals,
        positions,
        pitch: 1.0 / res as f64,
    })
}

/// Upper cap of a sphere of the given radius whose silhouette fills the
/// central disc of the footprint (disc radius 0.5). Requires radius ≥ 0.5.
/// The cap apex sits at z = radius − sqrt(radius² − 0.25) above the rim
/// plane z = 0, so the rim of the visible disc lies at z = 0.
pub fn sphere_cap(res: usize, radius: f64) -> Result<Geometry> {
    check_res(res)?;
    if !(radius >= 0.5 && radius.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "sphere radius must be at least the disc radius 0.5, got {radius}"
        )));
    }
    let z0 = -(radius * radius - 0.25).sqrt();
    let center = Vector3::new(0.0, 0.0, z0);
    let mut normals = VectorMap::filled(res, res, Vector3::zeros());
    let mut positions = VectorMap::filled(res, res, Vector3::zeros());
    for y in 0..res {
        for x in 0..res {
            let p = pixel_center(x, y, res);
            let r2 = p.norm_squared();
            if r2 > 0.25 {
                positions.set_valid(x, y, false);
                normals.set_valid(x, y, false);
                continue;
            }
            let z = z0 + (radius * radius - r2).sqrt();
            let v = Vector3::new(p.x, p.y, z);
            positions.set(x, y, v);
            normals.set(x, y, (v - center) / radius);
        }
    }
    Ok(Geometry {
        normals,
        positions,
        pitch: 1.0 / res as f64,
    })
}

/// Sphere cap overlaid with seeded Gaussian bumps — a surface with rich
/// normal diversity and no symmetry. Bump centers are drawn inside the disc,
/// amplitudes in ±amplitude, widths in [0.05, 0.15].
pub fn bumpy_cap(
    res: usize,
    radius: f64,
    bumps: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Geometry> {
    check_res(res)?;
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "bump amplitude must be finite and non-negative, got {amplitude}"
        )));
    }
    if !(radius >= 0.5 && radius.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "sphere radius must be at least the disc radius 0.5, got {radius}"
        )));
    }
    let mut rng = stream(seed, tags::GEOMETRY, 0);
    let params: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            let cx = rng.random_range(-0.4..0.4);
            let cy = rng.random_range(-0.4..0.4);
            let a = rng.random_range(-amplitude..=amplitude);
            let w = rng.random_range(0.05..0.15);
            (cx, cy, a, w)
        })
        .collect();
    let z0 = -(radius * radius - 0.25).sqrt();
    height_field(res, |x, y| {
        let r2 = x * x + y * y;
        if r2 > 0.25 {
            return None;
        }
        let s = (radius * radius - r2).sqrt();
        let mut z = z0 + s;
        let mut zx = -x / s;
        let mut zy = -y / s;
        for &(cx, cy, a, w) in &params {
            let dx = x - cx;
            let dy = y - cy;
            let g = a * (-(dx * dx + dy * dy) / (2.0 * w * w)).exp();
            z += g;
            zx += g * (-dx / (w * w));
            zy += g * (-dy / (w * w));
        }
        Some((z, zx, zy))
    })
}

/// Tilted plane z = a·x + b·y covering the full footprint.
pub fn plane(res: usize, a: f64, b: f64) -> Result<Geometry> {
    height_field(res, |x, y| Some((a * x + b * y, a, b)))
}

/// Mask selecting the central axis-aligned square covering the given
/// fraction of each dimension.
pub fn central_mask(res: usize, fraction: f64) -> Vec<bool> {
    let half = 0.5 * fraction;
    let mut mask = vec![false; res * res];
    for y in 0..res {
        for x in 0..res {
            let p = pixel_center(x, y, res);
            mask[y * res + x] = p.x.abs() <= half && p.y.abs() <= half;
        }
    }
    mask
}

/// Two-region albedo: `inner` inside a disc of the given radius centered at
/// the footprint origin, `outer` elsewhere. Shape follows the template map.
pub fn disc_albedo(
    template: &VectorMap,
    disc_radius: f64,
    inner: Vector3<f64>,
    outer: Vector3<f64>,
) -> VectorMap {
    let res = template.width();
    VectorMap::from_fn(template.width(), template.height(), |x, y| {
        let p = pixel_center(x, y, res);
        Some(if p.norm() <= disc_radius { inner } else { outer })
    })
}

/// Uniform albedo map matching the template's shape (all pixels valid).
pub fn uniform_albedo(template: &VectorMap, value: Vector3<f64>) -> VectorMap {
    VectorMap::filled(template.width(), template.height(), value)
}

/// Proxy geometry: ground-truth maps perturbed by smooth, seeded normal
/// noise of the given RMS magnitude (degrees). The perturbation field is a
/// low-frequency sinusoid mix, so neighboring pixels rotate coherently the
/// way a coarse scanned proxy would err.
pub fn perturb_normals(geometry: &Geometry, rms_degrees: f64, seed: u64) -> Result<Geometry> {
    if !(rms_degrees >= 0.0 && rms_degrees.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "normal noise RMS must be finite and non-negative, got {rms_degrees}"
        )));
    }
    let mut out = geometry.clone();
    if rms_degrees == 0.0 {
        return Ok(out);
    }
    let mut rng = stream(seed, tags::PROXY_NOISE, 0);
    // Three low-frequency waves per rotation axis. Each sin wave contributes
    // variance amp²/2 per axis, so the two-axis tilt magnitude has variance
    // 2 · 3 · amp²/2 = 3·amp²; pick amp so the tilt RMS matches the request.
    let waves: Vec<(Vector2<f64>, f64, usize)> = (0..6)
        .map(|k| {
            let dir = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let freq = rng.random_range(2.0..6.0) * std::f64::consts::PI;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (dir.normalize() * freq, phase, k % 2)
        })
        .collect();
    let amp = rms_degrees.to_radians() / 3.0f64.sqrt();
    let res = geometry.normals.width();
    for i in 0..geometry.normals.len() {
        if !geometry.normals.is_valid(i) {
            continue;
        }
        let (x, y) = geometry.normals.coords(i);
        let p = pixel_center(x, y, res);
        let mut angle = [0.0f64; 2];
        for (kvec, phase, axis) in &waves {
            angle[*axis] += amp * (kvec.dot(&p) + phase).sin();
        }
        let n = geometry.normals.data()[i];
        let rot = nalgebra::Rotation3::from_euler_angles(angle[0], angle[1], 0.0);
        out.normals.data_mut()[i] = rot * n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Central-difference normal estimate from the position map, used as an
    /// independent check on the analytic normals.
    fn finite_difference_normal(g: &Geometry, x: usize, y: usize) -> Vector3<f64> {
        let zx = (g.positions.get(x + 1, y).z - g.positions.get(x - 1, y).z) / (2.0 * g.pitch);
        // Row index grows downward while scene y grows upward.
        let zy = (g.positions.get(x, y - 1).z - g.positions.get(x, y + 1).z) / (2.0 * g.pitch);
        Vector3::new(-zx, -zy, 1.0).normalize()
    }

    #[test]
    fn footprint_spans_unit_square() {
        let res = 64;
        let lo = pixel_center(0, res - 1, res);
        let hi = pixel_center(res - 1, 0, res);
        assert_relative_eq!(lo.x, -0.5 + 0.5 / res as f64, epsilon = 1e-12);
        assert_relative_eq!(lo.y, -0.5 + 0.5 / res as f64, epsilon = 1e-12);
        assert_relative_eq!(hi.x, 0.5 - 0.5 / res as f64, epsilon = 1e-12);
        assert_relative_eq!(hi.y, 0.5 - 0.5 / res as f64, epsilon = 1e-12);
    }

    #[test]
    fn sphere_cap_matches_finite_differences() {
        let g = sphere_cap(128, 0.9).unwrap();
        let mut checked = 0;
        for y in (10..118).step_by(13) {
            for x in (10..118).step_by(13) {
                let i = g.normals.index(x, y);
                if !(1..127).contains(&x) || !(1..127).contains(&y) {
                    continue;
                }
                let all_valid = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                    .iter()
                    .all(|&(a, b)| g.positions.is_valid(g.positions.index(a, b)));
                if !g.normals.is_valid(i) || !all_valid {
                    continue;
                }
                let fd = finite_difference_normal(&g, x, y);
                let dot = fd.dot(&g.normals.data()[i]).clamp(-1.0, 1.0);
                assert!(
                    dot.acos().to_degrees() < 0.5,
                    "normal mismatch at ({x},{y}): {:.3}°",
                    dot.acos().to_degrees()
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn sphere_cap_rim_touches_zero_and_apex_height() {
        let g = sphere_cap(256, 1.0).unwrap();
        let c = 128;
        let apex = g.positions.get(c, c).z;
        assert_relative_eq!(apex, 1.0 - (0.75f64).sqrt(), epsilon = 1e-2);
        // All valid z values lie in [0, apex].
        for (_, p) in g.positions.iter_valid() {
            assert!(p.z >= -1e-9 && p.z <= apex + 1e-9);
        }
    }

    #[test]
    fn bumpy_cap_matches_finite_differences() {
        let g = bumpy_cap(128, 0.9, 12, 0.05, 3).unwrap();
        let mut checked = 0;
        for y in (20..108).step_by(11) {
            for x in (20..108).step_by(11) {
                let i = g.normals.index(x, y);
                let all_valid = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                    .iter()
                    .all(|&(a, b)| g.positions.is_valid(g.positions.index(a, b)));
                if !g.normals.is_valid(i) || !all_valid {
                    continue;
                }
                let fd = finite_difference_normal(&g, x, y);
                let dot = fd.dot(&g.normals.data()[i]).clamp(-1.0, 1.0);
                assert!(
                    dot.acos().to_degrees() < 1.5,
                    "normal mismatch at ({x},{y}): {:.3}°",
                    dot.acos().to_degrees()
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn bumpy_cap_is_seeded() {
        let a = bumpy_cap(32, 0.9, 8, 0.05, 1).unwrap();
        let b = bumpy_cap(32, 0.9, 8, 0.05, 1).unwrap();
        let c = bumpy_cap(32, 0.9, 8, 0.05, 2).unwrap();
        assert_eq!(a.positions.data(), b.positions.data());
        assert_ne!(a.positions.data(), c.positions.data());
    }

    #[test]
    fn plane_has_constant_exact_normal() {
        let g = plane(32, 0.3, -0.2).unwrap();
        let expect = Vector3::new(-0.3, 0.2, 1.0).normalize();
        for (_, n) in g.normals.iter_valid() {
            assert_relative_eq!(*n, expect, epsilon = 1e-12);
        }
        assert_eq!(g.normals.valid_count(), 32 * 32);
    }

    #[test]
    fn central_mask_covers_expected_fraction() {
        let mask = central_mask(100, 0.5);
        let count = mask.iter().filter(|m| **m).count();
        assert_eq!(count, 50 * 50);
    }

    #[test]
    fn disc_albedo_splits_regions() {
        let t = VectorMap::filled(64, 64, Vector3::zeros());
        let inner = Vector3::new(0.9, 0.2, 0.2);
        let outer = Vector3::new(0.2, 0.9, 0.2);
        let a = disc_albedo(&t, 0.25, inner, outer);
        assert_eq!(a.get(32, 32), inner);
        assert_eq!(a.get(1, 1), outer);
    }

    #[test]
    fn perturbation_hits_requested_rms() {
        let g = sphere_cap(96, 0.9).unwrap();
        let p = perturb_normals(&g, 5.0, 11).unwrap();
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for (i, n) in g.normals.iter_valid() {
            let d = n.dot(&p.normals.data()[i]).clamp(-1.0, 1.0);
            sum_sq += d.acos().to_degrees().powi(2);
            count += 1;
        }
        let rms = (sum_sq / count as f64).sqrt();
        assert!(
            (rms - 5.0).abs() < 1.5,
            "perturbation RMS {rms:.2}° should be near 5°"
        );
        // Perturbed normals stay unit length.
        p.normals.assert_unit_normals(1e-9).unwrap();
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let g = sphere_cap(32, 0.9).unwrap();
        let p = perturb_normals(&g, 0.0, 11).unwrap();
        assert_eq!(g.normals.data(), p.normals.data());
    }
}
