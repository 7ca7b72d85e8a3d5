//! Body shape models: triangle meshes, ray casting, point-in-polyhedron
//! classification, mascon generation and direction sampling.
//!
//! All coordinates are dimensionless, normalized by the body's
//! characteristic length so that the mesh fits in `[-1, 1]^3`.

mod bvh;
mod mascon;
mod obj;
pub mod shapes;
mod sphere;

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

pub use bvh::Bvh;
pub use mascon::{generate_mascons_voxel, MasconModel};
pub use sphere::fibonacci_sphere;

pub type Vec3 = Vector3<f64>;

/// Minimum admissible triangle area in normalized units.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Barycentric / distance margin under which a parity hit is treated as grazing.
pub const GRAZING_MARGIN: f64 = 1e-12;

/// Number of re-casts attempted by [`point_in_polyhedron`] before giving up.
pub const PARITY_RETRIES: usize = 8;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: non-finite coordinate")]
    NonFinite { line: usize },
    #[error("mesh has no vertices or no triangles")]
    EmptyMesh,
    #[error(
        "triangle {triangle} references vertex {index} but only {vertex_count} vertices exist"
    )]
    IndexOutOfRange {
        triangle: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("vertex {vertex} lies outside [-1, 1]^3 after normalization ({value})")]
    NotNormalized { vertex: usize, value: f64 },
    #[error("characteristic length must be positive and finite, got {0}")]
    BadCharacteristicLength(f64),
    #[error("mesh is not watertight: {open_edges} edges are not shared by exactly two triangles")]
    NotWatertight { open_edges: usize },
    #[error("voxel grid resolution {0} is too coarse (minimum 2)")]
    GridTooCoarse(usize),
    #[error("no voxel cell centers fall inside the mesh")]
    NoInteriorCells,
    #[error("parity ray from ({x}, {y}, {z}) stayed degenerate after {retries} retries")]
    GrazingParity {
        x: f64,
        y: f64,
        z: f64,
        retries: usize,
    },
    #[error("ray direction must be non-zero and finite")]
    BadDirection,
    #[error("mascon file: {0}")]
    MasconFormat(String),
}

/// A half-line `origin + t * direction`, `t >= 0`, with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(GeometryError::BadDirection);
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    /// Builds a ray from a direction the caller guarantees to be unit length.
    pub fn from_unit(origin: Vec3, direction: Vec3) -> Self {
        debug_assert!((direction.norm() - 1.0).abs() < 1e-9);
        Self { origin, direction }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Hit record with the smallest barycentric coordinate at the hit point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TriangleHit {
    pub t: f64,
    pub min_barycentric: f64,
}

/// Möller–Trumbore with a symmetric acceptance band of `margin` on the
/// barycentric coordinates and on `t`.
#[inline]
pub(crate) fn moller_trumbore(
    origin: &Vec3,
    direction: &Vec3,
    v0: &Vec3,
    e1: &Vec3,
    e2: &Vec3,
    margin: f64,
) -> Option<TriangleHit> {
    let p = direction.cross(e2);
    let det = e1.dot(&p);
    if det == 0.0 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv_det;
    if u < -margin || u > 1.0 + margin {
        return None;
    }
    let q = s.cross(e1);
    let v = direction.dot(&q) * inv_det;
    let w = 1.0 - u - v;
    if v < -margin || w < -margin {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    if t < -margin {
        return None;
    }
    Some(TriangleHit {
        t,
        min_barycentric: u.min(v).min(w),
    })
}

/// Distance `t >= 0` along `ray` to triangle `(v0, v1, v2)`, if it is hit.
///
/// Barycentric coordinates of the hit are within `[0, 1]`; a ray parallel
/// to the triangle plane never hits.
pub fn ray_triangle_intersect(ray: &Ray, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    moller_trumbore(&ray.origin, &ray.direction, v0, &e1, &e2, 0.0).map(|hit| hit.t)
}

/// Indexed triangle surface in normalized coordinates.
///
/// Immutable after construction; the ray-casting acceleration structure is
/// built once in [`TriangleMesh::new`].
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    characteristic_length_km: f64,
    bvh: Bvh,
}

impl TriangleMesh {
    /// Validates already-normalized geometry and builds the BVH.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        characteristic_length_km: f64,
    ) -> Result<Self, GeometryError> {
        if !(characteristic_length_km > 0.0 && characteristic_length_km.is_finite()) {
            return Err(GeometryError::BadCharacteristicLength(
                characteristic_length_km,
            ));
        }
        if vertices.is_empty() || triangles.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        for (i, v) in vertices.iter().enumerate() {
            for &c in v.iter() {
                if !c.is_finite() {
                    return Err(GeometryError::NonFinite { line: 0 });
                }
                if c.abs() > 1.0 {
                    return Err(GeometryError::NotNormalized {
                        vertex: i,
                        value: c,
                    });
                }
            }
        }
        for (i, tri) in triangles.iter().enumerate() {
            for &idx in tri {
                if idx >= vertices.len() {
                    return Err(GeometryError::IndexOutOfRange {
                        triangle: i,
                        index: idx as i64,
                        vertex_count: vertices.len(),
                    });
                }
            }
            let [a, b, c] = tri.map(|k| vertices[k]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(GeometryError::DegenerateTriangle { triangle: i, area });
            }
        }
        let bvh = Bvh::build(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            characteristic_length_km,
            bvh,
        })
    }

    /// Parses Wavefront OBJ text whose coordinates are in kilometres and
    /// divides them by `characteristic_length_km`.
    pub fn from_obj_str(text: &str, characteristic_length_km: f64) -> Result<Self, GeometryError> {
        if !(characteristic_length_km > 0.0 && characteristic_length_km.is_finite()) {
            return Err(GeometryError::BadCharacteristicLength(
                characteristic_length_km,
            ));
        }
        let raw = obj::parse(text)?;
        let vertices = raw
            .vertices
            .into_iter()
            .map(|v| v / characteristic_length_km)
            .collect();
        Self::new(vertices, raw.triangles, characteristic_length_km)
    }

    /// Serializes to OBJ with coordinates scaled back to kilometres.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let p = v * self.characteristic_length_km;
            out.push_str(&format!("v {:?} {:?} {:?}\n", p.x, p.y, p.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn characteristic_length_km(&self) -> f64 {
        self.characteristic_length_km
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|k| self.vertices[k])
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Axis-aligned bounds `(min, max)` of the vertices.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn open_edge_count(&self) -> usize {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        self.open_edge_count() == 0
    }

    /// Signed-volume sum over faces (divergence theorem); returns
    /// `(|volume|, volume centroid)` independent of face orientation.
    pub fn volume_and_centroid(&self) -> (f64, Vec3) {
        let mut volume = 0.0;
        let mut moment = Vec3::zeros();
        for t in &self.triangles {
            let [a, b, c] = t.map(|k| self.vertices[k]);
            let v = a.dot(&b.cross(&c)) / 6.0;
            volume += v;
            moment += (a + b + c) * (v / 4.0);
        }
        (volume.abs(), moment / volume)
    }

    /// True iff `ray` hits any triangle, using the BVH.
    pub fn ray_hits(&self, ray: &Ray) -> bool {
        self.bvh.any_hit(ray)
    }

    /// Reference implementation of [`TriangleMesh::ray_hits`]: tests every triangle.
    pub fn ray_hits_exhaustive(&self, ray: &Ray) -> bool {
        self.triangles.iter().any(|t| {
            let [a, b, c] = t.map(|k| self.vertices[k]);
            ray_triangle_intersect(ray, &a, &b, &c).is_some()
        })
    }
}

/// True iff `ray` intersects `mesh` at some `t >= 0`.
pub fn ray_hits_mesh(ray: &Ray, mesh: &TriangleMesh) -> bool {
    mesh.ray_hits(ray)
}

/// Reads an OBJ file in kilometres and normalizes it.
pub fn load_mesh(
    path: impl AsRef<Path>,
    characteristic_length_km: f64,
) -> Result<TriangleMesh, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TriangleMesh::from_obj_str(&text, characteristic_length_km)
}

/// Parity ray directions: a near-`x` jittered direction followed by
/// re-jittered fallbacks with irrational component ratios.
fn parity_direction(attempt: usize) -> Vec3 {
    const SQRT2: f64 = std::f64::consts::SQRT_2;
    let k = attempt as f64;
    let d = match attempt {
        0 => Vec3::new(1.0, 1e-4 * SQRT2, 1e-8 * 3f64.sqrt()),
        _ => {
            // Golden-ratio walk over the sphere.
            let phi = k * std::f64::consts::PI * (3.0 - 5f64.sqrt()) + 0.5;
            let z = 1.0 - 2.0 * ((k * 0.618_033_988_749_894_9).fract() * 0.9 + 0.05);
            let r = (1.0 - z * z).sqrt();
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        }
    };
    d.normalize()
}

/// Inside/outside test for a watertight mesh by crossing-count parity.
///
/// A hit closer than [`GRAZING_MARGIN`] to a triangle edge or to the query
/// point triggers a re-cast along the next jittered direction.
pub fn point_in_polyhedron(p: &Vec3, mesh: &TriangleMesh) -> Result<bool, GeometryError> {
    for attempt in 0..=PARITY_RETRIES {
        let dir = parity_direction(attempt);
        if let Some(crossings) = mesh.bvh.count_crossings(p, &dir, GRAZING_MARGIN) {
            return Ok(crossings % 2 == 1);
        }
    }
    Err(GeometryError::GrazingParity {
        x: p.x,
        y: p.y,
        z: p.z,
        retries: PARITY_RETRIES,
    })
}

/// Same as [`point_in_polyhedron`] along an explicit direction; `None` if
/// that direction is degenerate for `p`.
pub fn point_in_polyhedron_along(p: &Vec3, direction: &Vec3, mesh: &TriangleMesh) -> Option<bool> {
    let dir = direction.normalize();
    mesh.bvh
        .count_crossings(p, &dir, GRAZING_MARGIN)
        .map(|c| c % 2 == 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra_obj() -> &'static str {
        "# unit tetrahedron\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n"
    }

    #[test]
    fn tetrahedron_loads_with_identity_scaling() {
        let mesh = TriangleMesh::from_obj_str(tetra_obj(), 1.0).unwrap();
        assert_eq!(mesh.triangles().len(), 4);
        assert_eq!(mesh.vertices()[1], Vec3::new(1.0, 0.0, 0.0));
        assert!(mesh.is_watertight());
    }

    #[test]
    fn cube_of_side_two_km_normalizes_to_unit_box() {
        let cube = shapes::cube(1.0);
        let obj = cube.to_obj_string();
        let mesh = TriangleMesh::from_obj_str(&obj, 1.0).unwrap();
        for v in mesh.vertices() {
            for c in v.iter() {
                assert_eq!(c.abs(), 1.0);
            }
        }
        // Same file read as 2 km with L = 2 km halves it.
        let doubled: String = obj
            .lines()
            .map(|l| {
                if let Some(rest) = l.strip_prefix("v ") {
                    let xs: Vec<f64> = rest
                        .split_whitespace()
                        .map(|s| s.parse().unwrap())
                        .collect();
                    format!("v {} {} {}\n", xs[0] * 2.0, xs[1] * 2.0, xs[2] * 2.0)
                } else {
                    format!("{l}\n")
                }
            })
            .collect();
        let mesh2 = TriangleMesh::from_obj_str(&doubled, 2.0).unwrap();
        assert_eq!(mesh2.vertices(), mesh.vertices());
    }

    #[test]
    fn unreferenced_vertex_is_accepted_but_huge_index_is_not() {
        let ok = format!("{}v 0.5 0.5 0.5\n", tetra_obj());
        assert!(TriangleMesh::from_obj_str(&ok, 1.0).is_ok());
        let bad = format!("{}f 1 2 1000000000\n", tetra_obj());
        match TriangleMesh::from_obj_str(&bad, 1.0) {
            Err(GeometryError::IndexOutOfRange { index, .. }) => assert_eq!(index, 999_999_999),
            other => panic!("expected index error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_non_finite_and_degenerate() {
        assert!(matches!(
            TriangleMesh::from_obj_str("# nothing\n", 1.0),
            Err(GeometryError::EmptyMesh)
        ));
        assert!(matches!(
            TriangleMesh::from_obj_str("v 0 0 nan\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", 1.0),
            Err(GeometryError::NonFinite { line: 1 })
        ));
        assert!(matches!(
            TriangleMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n", 2.0),
            Err(GeometryError::DegenerateTriangle { .. })
        ));
        assert!(matches!(
            TriangleMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n", 1.0),
            Err(GeometryError::Parse { line: 4, .. })
        ));
        assert!(matches!(
            TriangleMesh::from_obj_str(tetra_obj(), 0.5),
            Err(GeometryError::NotNormalized { .. })
        ));
    }

    #[test]
    fn moller_trumbore_axis_cases() {
        let v0 = Vec3::new(-1.0, -1.0, 0.0);
        let v1 = Vec3::new(1.0, -1.0, 0.0);
        let v2 = Vec3::new(0.0, 1.0, 0.0);
        let up = Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::z()).unwrap();
        assert_eq!(ray_triangle_intersect(&up, &v0, &v1, &v2), Some(2.0));
        let down = Ray::new(Vec3::new(0.0, 0.0, -2.0), -Vec3::z()).unwrap();
        assert_eq!(ray_triangle_intersect(&down, &v0, &v1, &v2), None);
        let parallel = Ray::new(Vec3::new(0.0, 0.0, 1.0), Vec3::x()).unwrap();
        assert_eq!(ray_triangle_intersect(&parallel, &v0, &v1, &v2), None);
    }

    #[test]
    fn cube_ray_hits() {
        let cube = shapes::cube(0.5);
        let through = Ray::new(Vec3::new(-3.0, 0.0, 0.0), Vec3::x()).unwrap();
        assert!(ray_hits_mesh(&through, &cube));
        let offset = Ray::new(Vec3::new(-3.0, 10.0, 0.0), Vec3::x()).unwrap();
        assert!(!ray_hits_mesh(&offset, &cube));
    }

    #[test]
    fn cube_inside_outside() {
        let cube = shapes::cube(0.5);
        assert!(point_in_polyhedron(&Vec3::zeros(), &cube).unwrap());
        assert!(!point_in_polyhedron(&Vec3::new(5.0, 5.0, 5.0), &cube).unwrap());
        assert!(!point_in_polyhedron(&Vec3::new(0.0, 0.7, 0.0), &cube).unwrap());
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(Ray::new(Vec3::zeros(), Vec3::zeros()).is_err());
    }

    #[test]
    fn volume_of_cube() {
        let cube = shapes::cube(0.5);
        let (v, c) = cube.volume_and_centroid();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(c.norm() < 1e-12);
    }
}
