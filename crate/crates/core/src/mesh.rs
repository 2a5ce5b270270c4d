//! Triangle-mesh export for integrated depth maps.
//!
//! Each valid depth pixel becomes one vertex at its scene-space center;
//! every 2×2 block of valid pixels becomes two counter-clockwise triangles
//! (viewed from +z, toward the camera). Vertex normals are copied from the
//! recovered normal map when one is supplied. Writers cover Wavefront OBJ
//! (text) and little-endian binary PLY, chosen by file extension.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{CpsError, Result};
use crate::map::{ScalarMap, VectorMap};

/// Indexed triangle mesh in scene coordinates.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    /// One per vertex when built with a normal map, empty otherwise.
    pub normals: Vec<Vector3<f64>>,
    /// Counter-clockwise vertex index triples.
    pub triangles: Vec<[u32; 3]>,
}

/// Lift a depth map to a mesh. `pixel_pitch` spaces the vertex grid; the
/// footprint is centered on the origin with scene y up (against image rows).
pub fn mesh_from_depth(
    depth: &ScalarMap,
    normals: Option<&VectorMap>,
    pixel_pitch: f64,
) -> Result<Mesh> {
    if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
        return Err(CpsError::InvalidInput(format!(
            "pixel pitch must be positive and finite, got {pixel_pitch}"
        )));
    }
    if let Some(n) = normals {
        if n.width() != depth.width() || n.height() != depth.height() {
            return Err(CpsError::ShapeMismatch(format!(
                "normal map {}x{} vs depth map {}x{}",
                n.width(),
                n.height(),
                depth.width(),
                depth.height()
            )));
        }
    }
    let (w, h) = (depth.width(), depth.height());
    let mut vertex_of = vec![u32::MAX; w * h];
    let mut vertices = Vec::new();
    let mut vertex_normals = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = depth.index(x, y);
            if !depth.is_valid(i) {
                continue;
            }
            vertex_of[i] = vertices.len() as u32;
            let px = (x as f64 + 0.5 - 0.5 * w as f64) * pixel_pitch;
            let py = (0.5 * h as f64 - y as f64 - 0.5) * pixel_pitch;
            vertices.push(Vector3::new(px, py, depth.data()[i]));
            if let Some(n) = normals {
                // Vertices exist wherever depth does; fall back to +z if the
                // normal map has no estimate there.
                let v = if n.is_valid(i) {
                    n.data()[i]
                } else {
                    Vector3::new(0.0, 0.0, 1.0)
                };
                vertex_normals.push(v);
            }
        }
    }
    if vertices.is_empty() {
        return Err(CpsError::InvalidInput(
            "depth map has no valid pixels to mesh".into(),
        ));
    }

    let mut triangles = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let a = vertex_of[depth.index(x, y)];
            let b = vertex_of[depth.index(x + 1, y)];
            let c = vertex_of[depth.index(x, y + 1)];
            let d = vertex_of[depth.index(x + 1, y + 1)];
            if a == u32::MAX || b == u32::MAX || c == u32::MAX || d == u32::MAX {
                continue;
            }
            // a—b on the upper scene row, c—d below; both triangles wind
            // counter-clockwise seen from +z.
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }
    Ok(Mesh {
        vertices,
        normals: vertex_normals,
        triangles,
    })
}

/// Serialize as Wavefront OBJ text.
pub fn obj_bytes(mesh: &Mesh) -> Vec<u8> {
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z).unwrap();
    }
    let with_normals = !mesh.normals.is_empty();
    for t in &mesh.triangles {
        if with_normals {
            writeln!(
                out,
                "f {0}//{0} {1}//{1} {2}//{2}",
                t[0] + 1,
                t[1] + 1,
                t[2] + 1
            )
            .unwrap();
        } else {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
    }
    out.into_bytes()
}

/// Serialize as binary little-endian PLY.
pub fn ply_bytes(mesh: &Mesh) -> Vec<u8> {
    let with_normals = !mesh.normals.is_empty();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    writeln!(header, "element vertex {}", mesh.vertices.len()).unwrap();
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if with_normals {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    writeln!(header, "element face {}", mesh.triangles.len()).unwrap();
    header.push_str("property list uchar uint vertex_indices\nend_header\n");

    let mut out = header.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        if with_normals {
            let n = mesh.normals[i];
            for c in [n.x, n.y, n.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    for t in &mesh.triangles {
        out.push(3u8);
        for &idx in t {
            out.extend_from_slice(&idx.to_le_bytes());
        }
    }
    out
}

/// Mesh a depth map and write it to `path`; `.obj` and `.ply` are supported.
pub fn export_mesh(
    path: impl AsRef<Path>,
    depth: &ScalarMap,
    normals: Option<&VectorMap>,
    pixel_pitch: f64,
) -> Result<()> {
    let path = path.as_ref();
    let mesh = mesh_from_depth(depth, normals, pixel_pitch)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("obj") => obj_bytes(&mesh),
        Some("ply") => ply_bytes(&mesh),
        _ => {
            return Err(CpsError::InvalidInput(format!(
                "unsupported mesh extension on {} (use .obj or .ply)",
                path.display()
            )));
        }
    };
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate;
    use crate::synth::geometry::sphere_cap;
    use std::collections::HashMap;

    fn all_valid_depth(w: usize, h: usize) -> ScalarMap {
        let mut d = ScalarMap::filled(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                d.set(x, y, (x + 2 * y) as f64 * 0.1);
                d.set_valid(x, y, true);
            }
        }
        d
    }

    #[test]
    fn full_two_by_two_gives_four_vertices_two_triangles() {
        let mesh = mesh_from_depth(&all_valid_depth(2, 2), None, 0.5).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.triangles.len(), 2);
        // Vertex layout: scene x right, scene y up, so image row 0 is on top.
        assert_eq!(mesh.vertices[0].x, -0.25);
        assert_eq!(mesh.vertices[0].y, 0.25);
        assert_eq!(mesh.vertices[3].x, 0.25);
        assert_eq!(mesh.vertices[3].y, -0.25);
        // Both triangles wind counter-clockwise seen from +z.
        for t in &mesh.triangles {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            let z = (b - a).cross(&(c - a)).z;
            assert!(z > 0.0, "clockwise triangle {t:?}");
        }
    }

    #[test]
    fn checkerboard_mask_has_vertices_but_no_triangles() {
        let mut d = all_valid_depth(6, 6);
        for y in 0..6 {
            for x in 0..6 {
                d.set_valid(x, y, (x + y) % 2 == 0);
            }
        }
        let mesh = mesh_from_depth(&d, None, 0.1).unwrap();
        assert_eq!(mesh.vertices.len(), 18);
        assert!(mesh.triangles.is_empty());
    }

    #[test]
    fn sphere_cap_mesh_is_a_topological_disc_with_one_boundary_loop() {
        let g = sphere_cap(256, 1.2).unwrap();
        let depth = integrate(&g.normals, 1.0 / 256.0).unwrap();
        let mesh = mesh_from_depth(&depth, Some(&g.normals), 1.0 / 256.0).unwrap();

        // Count each undirected edge and how many triangles share it.
        let mut edge_uses: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &mesh.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *edge_uses.entry(key).or_insert(0) += 1;
            }
        }
        let v = mesh.vertices.len() as i64;
        let e = edge_uses.len() as i64;
        let f = mesh.triangles.len() as i64;
        assert_eq!(v - e + f, 1, "Euler characteristic of a disc");
        assert!(edge_uses.values().all(|&u| u <= 2), "non-manifold edge");

        // The boundary is watertight: every boundary vertex joins exactly
        // two boundary edges, forming closed loops.
        let mut boundary_degree: HashMap<u32, u32> = HashMap::new();
        for (&(a, b), &uses) in &edge_uses {
            if uses == 1 {
                *boundary_degree.entry(a).or_insert(0) += 1;
                *boundary_degree.entry(b).or_insert(0) += 1;
            }
        }
        assert!(!boundary_degree.is_empty());
        assert!(boundary_degree.values().all(|&d| d == 2));
    }

    #[test]
    fn obj_output_lists_every_vertex_normal_and_face() {
        let d = all_valid_depth(3, 2);
        let mut n = VectorMap::filled(3, 2, Vector3::new(0.0, 0.0, 1.0));
        for y in 0..2 {
            for x in 0..3 {
                n.set_valid(x, y, true);
            }
        }
        let mesh = mesh_from_depth(&d, Some(&n), 0.1).unwrap();
        let text = String::from_utf8(obj_bytes(&mesh)).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 6);
        assert_eq!(text.lines().filter(|l| l.starts_with("vn ")).count(), 6);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 4);
        assert!(text.contains("f 1//1 4//4 2//2"));
    }

    #[test]
    fn ply_output_has_exact_binary_length() {
        let d = all_valid_depth(4, 3);
        let mesh = mesh_from_depth(&d, None, 0.1).unwrap();
        let bytes = ply_bytes(&mesh);
        let header_len = bytes
            .windows(11)
            .position(|w| w == b"end_header\n")
            .unwrap()
            + 11;
        let expected = header_len + mesh.vertices.len() * 12 + mesh.triangles.len() * 13;
        assert_eq!(bytes.len(), expected);
        assert!(bytes.starts_with(b"ply\nformat binary_little_endian 1.0\n"));
    }

    #[test]
    fn export_rejects_empty_maps_and_unknown_extensions() {
        let mut d = all_valid_depth(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                d.set_valid(x, y, false);
            }
        }
        assert!(matches!(
            mesh_from_depth(&d, None, 0.1),
            Err(CpsError::InvalidInput(_))
        ));

        let dir = tempfile::tempdir().unwrap();
        let ok = all_valid_depth(4, 4);
        assert!(matches!(
            export_mesh(dir.path().join("m.stl"), &ok, None, 0.1),
            Err(CpsError::InvalidInput(_))
        ));
        export_mesh(dir.path().join("m.obj"), &ok, None, 0.1).unwrap();
        export_mesh(dir.path().join("m.ply"), &ok, None, 0.1).unwrap();
        assert!(dir.path().join("m.obj").exists());
        assert!(dir.path().join("m.ply").exists());
    }

    #[test]
    fn mismatched_normal_map_shape_is_rejected() {
        let d = all_valid_depth(4, 4);
        let n = VectorMap::filled(3, 4, Vector3::new(0.0, 0.0, 1.0));
        assert!(matches!(
            mesh_from_depth(&d, Some(&n), 0.1),
            Err(CpsError::ShapeMismatch(_))
        ));
    }
}
