//! Procedural test bodies: cube, icosphere and a bilobed comet-like body.
//!
//! All are watertight, outward-oriented and built with characteristic
//! length 1 km.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriangleMesh, Vec3};

/// Axis-aligned cube `[-h, h]^3`, 12 triangles.
pub fn cube(half_extent: f64) -> TriangleMesh {
    let h = half_extent;
    let vertices = vec![
        Vec3::new(-h, -h, -h),
        Vec3::new(h, -h, -h),
        Vec3::new(h, h, -h),
        Vec3::new(-h, h, -h),
        Vec3::new(-h, -h, h),
        Vec3::new(h, -h, h),
        Vec3::new(h, h, h),
        Vec3::new(-h, h, h),
    ];
    let triangles = vec![
        [0, 3, 2],
        [0, 2, 1],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [1, 2, 6],
        [1, 6, 5],
        [0, 4, 7],
        [0, 7, 3],
    ];
    TriangleMesh::new(vertices, triangles, 1.0).expect("cube is valid")
}

/// Unit-sphere triangulation: `20 * 4^subdivisions` triangles, vertices
/// on the sphere.
pub fn icosphere(subdivisions: u32) -> TriangleMesh {
    let (vertices, triangles) = icosphere_raw(subdivisions);
    TriangleMesh::new(vertices, triangles, 1.0).expect("icosphere is valid")
}

fn icosphere_raw(subdivisions: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    // Keep coordinates inside the unit box despite rounding in normalize().
    for v in &mut vertices {
        for c in v.iter_mut() {
            *c = c.clamp(-1.0, 1.0);
        }
    }
    (vertices, triangles)
}

/// Star-shaped union of two overlapping balls with a few smooth surface
/// bumps, scaled so that the largest coordinate magnitude is 0.98.
///
/// Its silhouettes are concave when viewed across the lobe axis, which
/// makes it a stand-in for contact-binary nuclei.
pub fn bilobed(subdivisions: u32, seed: u64) -> TriangleMesh {
    let (dirs, triangles) = icosphere_raw(subdivisions);
    let lobes = [
        (Vec3::new(-0.33, 0.0, 0.0), 0.56),
        (Vec3::new(0.36, 0.06, 0.03), 0.42),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(Vec3, f64, f64)> = (0..6)
        .map(|_| {
            let c = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            (
                c,
                rng.random_range(-0.06..0.06),
                rng.random_range(0.05..0.2),
            )
        })
        .collect();
    let mut vertices: Vec<Vec3> = dirs
        .iter()
        .map(|d| {
            // Exit distance from the origin through each ball.
            let r = lobes
                .iter()
                .map(|(c, radius)| {
                    let b = d.dot(c);
                    b + (b * b - c.norm_squared() + radius * radius).sqrt()
                })
                .fold(0.0, f64::max);
            let bump: f64 = bumps
                .iter()
                .map(|(c, amp, width)| amp * (-(1.0 - d.dot(c)) / width).exp())
                .sum();
            d * (r * (1.0 + bump))
        })
        .collect();
    let max_abs = vertices
        .iter()
        .flat_map(|v| v.iter().map(|c| c.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let scale = 0.98 / max_abs;
    for v in &mut vertices {
        *v *= scale;
    }
    TriangleMesh::new(vertices, triangles, 1.0).expect("bilobed body is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_watertightness() {
        let s = icosphere(4);
        assert_eq!(s.triangles().len(), 5120);
        assert!(s.is_watertight());
        let b = bilobed(5, 1);
        assert_eq!(b.triangles().len(), 20480);
        assert!(b.is_watertight());
        assert!(cube(0.5).is_watertight());
    }

    #[test]
    fn outward_orientation() {
        for mesh in [cube(0.5), icosphere(2), bilobed(2, 3)] {
            let signed: f64 = mesh
                .triangles()
                .iter()
                .map(|t| {
                    let [a, b, c] = t.map(|k| mesh.vertices()[k]);
                    a.dot(&b.cross(&c))
                })
                .sum();
            assert!(signed > 0.0);
        }
    }
}
