//! Axis-aligned bounding volume hierarchy over mesh triangles.
//!
//! Median split on the longest axis of the centroid bounds, at most
//! [`LEAF_SIZE`] triangles per leaf. Construction is deterministic.

use super::{moller_trumbore, Ray, Vec3};

pub const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: first slot in `tris`. Internal: index of the right child (the
    /// left child immediately follows the node).
    index: u32,
    /// Number of triangles for a leaf, zero for internal nodes.
    count: u32,
}

/// Edge-form triangle cached for intersection tests.
#[derive(Debug, Clone)]
struct PackedTriangle {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<PackedTriangle>,
}

impl Bvh {
    pub fn build(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Self {
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0)
            .collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, vertices, triangles, &centroids);
        let tris = order
            .iter()
            .map(|&i| {
                let [a, b, c] = triangles[i].map(|k| vertices[k]);
                PackedTriangle {
                    v0: a,
                    e1: b - a,
                    e2: c - a,
                }
            })
            .collect();
        Self { nodes, tris }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Any forward hit (`t >= 0`, barycentrics in `[0, 1]`).
    pub(crate) fn any_hit(&self, ray: &Ray) -> bool {
        let inv = inverse_direction(&ray.direction);
        let mut stack = [0u32; 64];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !slab_hit(&node.lo, &node.hi, &ray.origin, &inv) {
                continue;
            }
            if node.count > 0 {
                let start = node.index as usize;
                for tri in &self.tris[start..start + node.count as usize] {
                    if moller_trumbore(&ray.origin, &ray.direction, &tri.v0, &tri.e1, &tri.e2, 0.0)
                        .is_some()
                    {
                        return true;
                    }
                }
            } else {
                let me = stack[top];
                stack[top] = node.index;
                stack[top + 1] = me + 1;
                top += 2;
            }
        }
        false
    }

    /// Number of forward crossings of the ray from `origin` along unit
    /// `direction`, or `None` if any hit lies within `margin` of a triangle
    /// edge or of the origin.
    pub(crate) fn count_crossings(
        &self,
        origin: &Vec3,
        direction: &Vec3,
        margin: f64,
    ) -> Option<usize> {
        let inv = inverse_direction(direction);
        let mut stack = [0u32; 64];
        let mut top = 1;
        let mut crossings = 0;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !slab_hit(&node.lo, &node.hi, origin, &inv) {
                continue;
            }
            if node.count > 0 {
                let start = node.index as usize;
                for tri in &self.tris[start..start + node.count as usize] {
                    if let Some(hit) =
                        moller_trumbore(origin, direction, &tri.v0, &tri.e1, &tri.e2, margin)
                    {
                        if hit.min_barycentric < margin || hit.t.abs() < margin {
                            return None;
                        }
                        crossings += 1;
                    }
                }
            } else {
                let me = stack[top];
                stack[top] = node.index;
                stack[top + 1] = me + 1;
                top += 2;
            }
        }
        Some(crossings)
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    offset: usize,
    vertices: &[Vec3],
    triangles: &[[usize; 3]],
    centroids: &[Vec3],
) -> usize {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut clo = lo;
    let mut chi = hi;
    for &i in order.iter() {
        for &k in &triangles[i] {
            lo = lo.inf(&vertices[k]);
            hi = hi.sup(&vertices[k]);
        }
        clo = clo.inf(&centroids[i]);
        chi = chi.sup(&centroids[i]);
    }
    let me = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        index: offset as u32,
        count: order.len() as u32,
    });
    let extent = chi - clo;
    let axis = extent.imax();
    if order.len() <= LEAF_SIZE || extent[axis] <= 0.0 {
        return me;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_node(nodes, left, offset, vertices, triangles, centroids);
    let right_index = build_node(nodes, right, offset + mid, vertices, triangles, centroids);
    nodes[me].index = right_index as u32;
    nodes[me].count = 0;
    me
}

#[inline]
fn inverse_direction(d: &Vec3) -> Vec3 {
    Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z)
}

/// Slab test against `[0, inf)`; boxes are tested with closed bounds.
#[inline]
fn slab_hit(lo: &Vec3, hi: &Vec3, origin: &Vec3, inv: &Vec3) -> bool {
    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        if inv[a].is_infinite() {
            // Direction component is zero: the ray stays in its slab or never enters.
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return false;
            }
            continue;
        }
        let t0 = (lo[a] - origin[a]) * inv[a];
        let t1 = (hi[a] - origin[a]) * inv[a];
        let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_enter = t_enter.max(near);
        t_exit = t_exit.min(far);
        if t_enter > t_exit {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::super::{shapes, Ray, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bvh_agrees_with_exhaustive_scan() {
        let mesh = shapes::bilobed(3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        for _ in 0..2000 {
            let o = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let target = Vec3::new(
                rng.random_range(-0.7..0.7),
                rng.random_range(-0.7..0.7),
                rng.random_range(-0.7..0.7),
            );
            let d = target - o;
            let ray = Ray::new(o, d).unwrap();
            let fast = mesh.ray_hits(&ray);
            assert_eq!(fast, mesh.ray_hits_exhaustive(&ray));
            hits += fast as usize;
        }
        assert!(hits > 200, "too few hits to be meaningful: {hits}");
    }

    #[test]
    fn axis_aligned_rays_through_boxes() {
        let cube = shapes::cube(0.5);
        for &(o, d) in &[
            (Vec3::new(0.2, 0.1, -3.0), Vec3::z()),
            (Vec3::new(0.2, -3.0, 0.1), Vec3::y()),
            (Vec3::new(0.7, 0.0, -3.0), Vec3::z()),
        ] {
            let ray = Ray::new(o, d).unwrap();
            assert_eq!(cube.ray_hits(&ray), cube.ray_hits_exhaustive(&ray));
        }
    }
}
