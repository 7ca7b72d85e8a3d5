//! Silhouette border extraction by marching squares over ray-cast
//! membership samples.

use std::fmt::Write as _;

use super::{in_shadow_cylinder, EclipseError, ProjectionFrame, Vec2, MIN_BOUNDARY_GRID};
use crate::geometry::{TriangleMesh, Vec3};

/// The extraction window is `[-EXTRACTION_HALF_WIDTH, EXTRACTION_HALF_WIDTH]^2`.
pub const EXTRACTION_HALF_WIDTH: f64 = 1.2;

/// Bisection tolerance for border points along grid edges.
pub const EDGE_TOLERANCE: f64 = 1e-9;

/// A run of consecutive border points (a closed contour, or an open chain
/// when a contour leaves the extraction window).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryLoop {
    pub start: usize,
    pub len: usize,
    pub closed: bool,
}

/// Border points, outward normals and contour structure for one Sun direction.
#[derive(Debug, Clone)]
pub struct SilhouetteBoundary {
    s_hat: Vec3,
    points: Vec<Vec2>,
    normals: Vec<Vec2>,
    turning: Vec<f64>,
    loops: Vec<BoundaryLoop>,
    pitch: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Nearest {
    pub distance: f64,
    pub foot: Vec2,
    /// Normal of the closest border point, used when the query is on the border.
    pub normal: Vec2,
}

impl SilhouetteBoundary {
    pub fn s_hat(&self) -> Vec3 {
        self.s_hat
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Outward (toward non-member) unit normals, one per point.
    pub fn normals(&self) -> &[Vec2] {
        &self.normals
    }

    /// Signed turning angle of the polyline at each point, radians.
    pub fn turning(&self) -> &[f64] {
        &self.turning
    }

    pub fn loops(&self) -> &[BoundaryLoop] {
        &self.loops
    }

    /// Spacing of the membership grid.
    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Closest point of the border polyline to `xy`.
    pub(crate) fn nearest(&self, xy: &Vec2) -> Nearest {
        let mut best = Nearest {
            distance: f64::INFINITY,
            foot: self.points[0],
            normal: self.normals[0],
        };
        let mut best_sq = f64::INFINITY;
        for lp in &self.loops {
            let pts = &self.points[lp.start..lp.start + lp.len];
            let segs = if lp.closed {
                lp.len
            } else {
                lp.len.saturating_sub(1)
            };
            if lp.len == 1 {
                let d2 = (xy - pts[0]).norm_squared();
                if d2 < best_sq {
                    best_sq = d2;
                    best.foot = pts[0];
                    best.normal = self.normals[lp.start];
                }
                continue;
            }
            for k in 0..segs {
                let a = pts[k];
                let b = pts[(k + 1) % lp.len];
                let ab = b - a;
                let len2 = ab.norm_squared();
                let t = if len2 > 0.0 {
                    ((xy - a).dot(&ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let foot = a + ab * t;
                let d2 = (xy - foot).norm_squared();
                if d2 < best_sq {
                    best_sq = d2;
                    best.foot = foot;
                    let idx = if t < 0.5 { k } else { (k + 1) % lp.len };
                    best.normal = self.normals[lp.start + idx];
                }
            }
        }
        best.distance = best_sq.sqrt();
        best
    }

    /// CSV with header `x,y,nx,ny`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,nx,ny\n");
        for (p, n) in self.points.iter().zip(&self.normals) {
            let _ = writeln!(out, "{:?},{:?},{:?},{:?}", p.x, p.y, n.x, n.y);
        }
        out
    }
}

/// Crossing of a grid edge: refined point and the unit direction from the
/// member end toward the non-member end.
struct Crossing {
    point: Vec2,
    outward: Vec2,
}

/// Marching squares over `grid_n x grid_n` membership samples on the
/// extraction window; each sign-change edge is refined by bisection.
pub fn extract_boundary(
    frame: &ProjectionFrame,
    mesh: &TriangleMesh,
    grid_n: usize,
) -> Result<SilhouetteBoundary, EclipseError> {
    if grid_n < MIN_BOUNDARY_GRID {
        return Err(EclipseError::GridTooCoarse(grid_n));
    }
    let n = grid_n;
    let w = EXTRACTION_HALF_WIDTH;
    let pitch = 2.0 * w / (n - 1) as f64;
    let coord = |i: usize| -w + pitch * i as f64;
    let member = |p: &Vec2| in_shadow_cylinder(p, frame, mesh);

    let mut grid = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            grid[j * n + i] = member(&Vec2::new(coord(i), coord(j)));
        }
    }
    let at = |i: usize, j: usize| grid[j * n + i];

    // Edge ids: horizontal (i,j)-(i+1,j) first, then vertical (i,j)-(i,j+1).
    let h_count = (n - 1) * n;
    let hid = |i: usize, j: usize| j * (n - 1) + i;
    let vid = |i: usize, j: usize| h_count + j * n + i;
    const NONE: u32 = u32::MAX;
    let mut node_of_edge = vec![NONE; h_count + n * (n - 1)];
    let mut crossings: Vec<Crossing> = Vec::new();

    let refine = |a: Vec2, b: Vec2, a_member: bool| -> Crossing {
        let (mut lo, mut hi) = (a, b);
        while (hi - lo).norm() > EDGE_TOLERANCE {
            let mid = (lo + hi) * 0.5;
            if member(&mid) == a_member {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dir = (b - a).normalize();
        Crossing {
            point: (lo + hi) * 0.5,
            outward: if a_member { dir } else { -dir },
        }
    };

    for j in 0..n {
        for i in 0..n - 1 {
            if at(i, j) != at(i + 1, j) {
                node_of_edge[hid(i, j)] = crossings.len() as u32;
                let c = refine(
                    Vec2::new(coord(i), coord(j)),
                    Vec2::new(coord(i + 1), coord(j)),
                    at(i, j),
                );
                crossings.push(c);
            }
        }
    }
    for j in 0..n - 1 {
        for i in 0..n {
            if at(i, j) != at(i, j + 1) {
                node_of_edge[vid(i, j)] = crossings.len() as u32;
                let c = refine(
                    Vec2::new(coord(i), coord(j)),
                    Vec2::new(coord(i), coord(j + 1)),
                    at(i, j),
                );
                crossings.push(c);
            }
        }
    }
    if crossings.is_empty() {
        let s = frame.s_hat;
        return Err(EclipseError::EmptyBoundary(s.x, s.y, s.z));
    }

    // Connect crossings cell by cell.
    let mut adjacency: Vec<[u32; 2]> = vec![[NONE, NONE]; crossings.len()];
    let mut link = |a: u32, b: u32| {
        for (x, y) in [(a, b), (b, a)] {
            let slot = &mut adjacency[x as usize];
            if slot[0] == NONE {
                slot[0] = y;
            } else {
                slot[1] = y;
            }
        }
    };
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let bottom = node_of_edge[hid(i, j)];
            let right = node_of_edge[vid(i + 1, j)];
            let top = node_of_edge[hid(i, j + 1)];
            let left = node_of_edge[vid(i, j)];
            let present: Vec<u32> = [bottom, right, top, left]
                .into_iter()
                .filter(|&e| e != NONE)
                .collect();
            match present.len() {
                0 => {}
                2 => link(present[0], present[1]),
                4 => {
                    let center = Vec2::new(coord(i) + 0.5 * pitch, coord(j) + 0.5 * pitch);
                    if member(&center) == at(i, j) {
                        // Bottom-left and top-right corners join through the center.
                        link(bottom, right);
                        link(top, left);
                    } else {
                        link(bottom, left);
                        link(top, right);
                    }
                }
                _ => unreachable!("a cell has an even number of sign-change edges"),
            }
        }
    }

    // Walk chains: open ones first (from their degree-one ends), then cycles.
    let mut visited = vec![false; crossings.len()];
    let mut order: Vec<usize> = Vec::with_capacity(crossings.len());
    let mut loops = Vec::new();
    let degree = |k: usize| adjacency[k].iter().filter(|&&x| x != NONE).count();
    let mut starts: Vec<usize> = (0..crossings.len()).filter(|&k| degree(k) <= 1).collect();
    starts.extend((0..crossings.len()).filter(|&k| degree(k) == 2));
    for start in starts {
        if visited[start] {
            continue;
        }
        let open = degree(start) <= 1;
        let first = order.len();
        let mut prev = NONE;
        let mut cur = start as u32;
        loop {
            visited[cur as usize] = true;
            order.push(cur as usize);
            let next = adjacency[cur as usize]
                .iter()
                .copied()
                .find(|&x| x != NONE && x != prev && !visited[x as usize]);
            match next {
                Some(nx) => {
                    prev = cur;
                    cur = nx;
                }
                None => break,
            }
        }
        loops.push(BoundaryLoop {
            start: first,
            len: order.len() - first,
            closed: !open,
        });
    }

    let points: Vec<Vec2> = order.iter().map(|&k| crossings[k].point).collect();
    let mut normals = Vec::with_capacity(points.len());
    let mut turning = Vec::with_capacity(points.len());
    for lp in &loops {
        let pts = &points[lp.start..lp.start + lp.len];
        for k in 0..lp.len {
            let (prev, next) = if lp.closed {
                (pts[(k + lp.len - 1) % lp.len], pts[(k + 1) % lp.len])
            } else {
                (pts[k.saturating_sub(1)], pts[(k + 1).min(lp.len - 1)])
            };
            let outward = crossings[order[lp.start + k]].outward;
            let tangent = next - prev;
            let mut normal = Vec2::new(tangent.y, -tangent.x);
            let len = normal.norm();
            normal = if len > 0.0 { normal / len } else { outward };
            if normal.dot(&outward) < 0.0 {
                normal = -normal;
            }
            normals.push(normal);
            let d_in = pts[k] - prev;
            let d_out = next - pts[k];
            let angle = if d_in.norm_squared() > 0.0 && d_out.norm_squared() > 0.0 {
                (d_in.x * d_out.y - d_in.y * d_out.x).atan2(d_in.dot(&d_out))
            } else {
                0.0
            };
            turning.push(angle);
        }
    }

    Ok(SilhouetteBoundary {
        s_hat: frame.s_hat,
        points,
        normals,
        turning,
        loops,
        pitch,
    })
}
