//! The signed eclipse function of a body seen along a Sun direction.
//!
//! For a Sun direction `ŝ` (body frame) every point is projected onto the
//! plane orthogonal to `ŝ`, with in-plane coordinates `(x, y)` along the
//! frame axes `û, v̂`. `F(x, y, ŝ)` is the distance from `(x, y)` to the
//! silhouette border, negative inside the shadow cylinder and positive
//! outside.

mod boundary;

use std::sync::{Arc, Mutex};

use nalgebra::Vector2;
use thiserror::Error;

use crate::geometry::{Ray, TriangleMesh, Vec3};

pub use boundary::{extract_boundary, BoundaryLoop, SilhouetteBoundary, EXTRACTION_HALF_WIDTH};

pub type Vec2 = Vector2<f64>;

/// Distance behind the body, along `-ŝ`, from which membership rays start.
/// Any normalized mesh lies within `sqrt(3) < 4` of the origin.
pub const RAY_START_OFFSET: f64 = 4.0;

/// Smallest admissible silhouette grid.
pub const MIN_BOUNDARY_GRID: usize = 64;

/// Absolute bisection tolerance used when refining distances near the border.
pub const NEAR_BORDER_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum EclipseError {
    #[error("Sun direction must be a unit vector (|s| = {0})")]
    NotUnit(f64),
    #[error("boundary grid {0} is below the minimum of {MIN_BOUNDARY_GRID}")]
    GridTooCoarse(usize),
    #[error("no silhouette found for Sun direction ({0}, {1}, {2})")]
    EmptyBoundary(f64, f64, f64),
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    BadStep(f64),
}

/// Orthonormal right-handed frame `{û, v̂, ŝ}` attached to a Sun direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionFrame {
    pub s_hat: Vec3,
    pub u_hat: Vec3,
    pub v_hat: Vec3,
}

impl ProjectionFrame {
    /// `û = normalize(a × ŝ)` with `a` the basis axis least aligned with
    /// `ŝ` (first one wins on ties), `v̂ = ŝ × û`.
    pub fn new(s_hat: Vec3) -> Result<Self, EclipseError> {
        let norm = s_hat.norm();
        if !((norm - 1.0).abs() <= 1e-9) {
            return Err(EclipseError::NotUnit(norm));
        }
        let mut axis = 0;
        for k in 1..3 {
            if s_hat[k].abs() < s_hat[axis].abs() {
                axis = k;
            }
        }
        let a = Vec3::ith(axis, 1.0);
        let u_hat = a.cross(&s_hat).normalize();
        let v_hat = s_hat.cross(&u_hat);
        Ok(Self {
            s_hat,
            u_hat,
            v_hat,
        })
    }

    /// In-plane coordinates of `p`.
    pub fn project(&self, p: &Vec3) -> Vec2 {
        Vec2::new(p.dot(&self.u_hat), p.dot(&self.v_hat))
    }

    /// Point `x·û + y·v̂` of the plane through the origin.
    pub fn lift(&self, xy: &Vec2) -> Vec3 {
        self.u_hat * xy.x + self.v_hat * xy.y
    }
}

/// Shorthand for [`ProjectionFrame::new`].
pub fn build_frame(s_hat: Vec3) -> Result<ProjectionFrame, EclipseError> {
    ProjectionFrame::new(s_hat)
}

/// True iff the line through `x·û + y·v̂` parallel to `ŝ` meets the mesh.
pub fn in_shadow_cylinder(xy: &Vec2, frame: &ProjectionFrame, mesh: &TriangleMesh) -> bool {
    let origin = frame.lift(xy) - frame.s_hat * RAY_START_OFFSET;
    mesh.ray_hits(&Ray::from_unit(origin, frame.s_hat))
}

/// Signed eclipse function at plane point `xy`.
///
/// The sign comes from the ray-cast membership. The magnitude is the
/// distance to the extracted border polyline; within two grid pitches of
/// the border it is replaced by the distance, along the direction to the
/// nearest polyline point, to the ray-cast membership change, so that the
/// zero set of `F` is exactly the Möller–Trumbore shadow edge.
pub fn eclipse_function(
    xy: &Vec2,
    boundary: &SilhouetteBoundary,
    frame: &ProjectionFrame,
    mesh: &TriangleMesh,
) -> f64 {
    let inside = in_shadow_cylinder(xy, frame, mesh);
    let sign = if inside { -1.0 } else { 1.0 };
    let nearest = boundary.nearest(xy);
    let pitch = boundary.pitch();
    let d = nearest.distance;
    if d >= 2.0 * pitch {
        return sign * d;
    }
    let Some(refined) = refine_near_border(xy, inside, &nearest, pitch, frame, mesh) else {
        return sign * d;
    };
    let w = ((2.0 * pitch - d) / pitch).clamp(0.0, 1.0);
    sign * (w * refined + (1.0 - w) * d)
}

/// Distance along the nearest-point direction to the membership change,
/// found by bisection on ray casts.
fn refine_near_border(
    xy: &Vec2,
    inside: bool,
    nearest: &boundary::Nearest,
    pitch: f64,
    frame: &ProjectionFrame,
    mesh: &TriangleMesh,
) -> Option<f64> {
    let dir = if nearest.distance > 1e-14 {
        (xy - nearest.foot) / nearest.distance
    } else {
        nearest.normal
    };
    let member = |tau: f64| in_shadow_cylinder(&(xy + dir * tau), frame, mesh);
    let window = pitch;
    let behind = -nearest.distance - window;
    let (mut a, mut b) = if member(behind) != inside {
        (behind, 0.0)
    } else if member(window) != inside {
        (0.0, window)
    } else {
        return None;
    };
    let member_at_a = if a == 0.0 { inside } else { !inside };
    while (b - a) > NEAR_BORDER_TOLERANCE {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if member(mid) == member_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some((0.5 * (a + b)).abs())
}

/// Result of [`check_gradient_identity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientIdentityReport {
    /// `max |∇F · n̂ − 1|` over evaluated points.
    pub max_deviation: f64,
    pub checked: usize,
    /// Border points skipped because the polyline turns by more than the
    /// corner threshold there or at a neighbour.
    pub masked: usize,
}

/// Turning angle above which a border point is treated as a corner.
pub const CORNER_TURNING_DEG: f64 = 20.0;

/// Central differences of `F` along the border normal at `p ± 2h n̂` for
/// every border point whose normal stencil contains no corner.
pub fn check_gradient_identity(
    boundary: &SilhouetteBoundary,
    frame: &ProjectionFrame,
    mesh: &TriangleMesh,
    h: f64,
) -> Result<GradientIdentityReport, EclipseError> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(EclipseError::BadStep(h));
    }
    let corner = CORNER_TURNING_DEG.to_radians();
    let mut report = GradientIdentityReport {
        max_deviation: 0.0,
        checked: 0,
        masked: 0,
    };
    let turning = boundary.turning();
    for lp in boundary.loops() {
        for j in 0..lp.len {
            let k = lp.start + j;
            // The normal at k is built from its two neighbours, so a corner
            // anywhere in that stencil tilts it.
            let stencil = if lp.closed {
                [(j + lp.len - 1) % lp.len, j, (j + 1) % lp.len]
            } else {
                [j.saturating_sub(1), j, (j + 1).min(lp.len - 1)]
            };
            if stencil
                .iter()
                .any(|&i| turning[lp.start + i].abs() > corner)
            {
                report.masked += 1;
                continue;
            }
            let p = boundary.points()[k];
            let n = boundary.normals()[k];
            for side in [1.0, -1.0] {
                let q = p + n * (2.0 * h * side);
                let fp = eclipse_function(&(q + n * h), boundary, frame, mesh);
                let fm = eclipse_function(&(q - n * h), boundary, frame, mesh);
                let dev = ((fp - fm) / (2.0 * h) - 1.0).abs();
                report.max_deviation = report.max_deviation.max(dev);
                report.checked += 1;
            }
        }
    }
    Ok(report)
}

/// Ground-truth eclipse function for arbitrary body-frame positions and
/// Sun directions, caching recently extracted silhouettes.
#[derive(Debug)]
pub struct EclipseOracle {
    mesh: Arc<TriangleMesh>,
    grid_n: usize,
    cache: Mutex<Vec<([u64; 3], Arc<SilhouetteBoundary>)>>,
}

const ORACLE_CACHE_SIZE: usize = 16;

impl EclipseOracle {
    pub fn new(mesh: Arc<TriangleMesh>, grid_n: usize) -> Result<Self, EclipseError> {
        if grid_n < MIN_BOUNDARY_GRID {
            return Err(EclipseError::GridTooCoarse(grid_n));
        }
        Ok(Self {
            mesh,
            grid_n,
            cache: Mutex::new(Vec::new()),
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    /// Silhouette for `s_hat`, extracted on first use.
    pub fn boundary(&self, s_hat: &Vec3) -> Result<Arc<SilhouetteBoundary>, EclipseError> {
        let key = [s_hat.x.to_bits(), s_hat.y.to_bits(), s_hat.z.to_bits()];
        if let Some((_, b)) = self.cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(b));
        }
        let frame = ProjectionFrame::new(*s_hat)?;
        let b = Arc::new(extract_boundary(&frame, &self.mesh, self.grid_n)?);
        let mut cache = self.cache.lock().unwrap();
        if cache.len() >= ORACLE_CACHE_SIZE {
            cache.remove(0);
        }
        cache.push((key, Arc::clone(&b)));
        Ok(b)
    }

    /// Membership of the projection of `position`; agrees exactly with the
    /// sign of [`EclipseOracle::eclipse_function`].
    pub fn in_shadow(&self, position: &Vec3, s_hat: &Vec3) -> Result<bool, EclipseError> {
        let frame = ProjectionFrame::new(*s_hat)?;
        Ok(in_shadow_cylinder(
            &frame.project(position),
            &frame,
            &self.mesh,
        ))
    }

    /// `F` at the projection of `position` onto the plane orthogonal to `s_hat`.
    pub fn eclipse_function(&self, position: &Vec3, s_hat: &Vec3) -> Result<f64, EclipseError> {
        let boundary = self.boundary(s_hat)?;
        let frame = ProjectionFrame::new(*s_hat)?;
        Ok(eclipse_function(
            &frame.project(position),
            &boundary,
            &frame,
            &self.mesh,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn frame_for_polar_sun() {
        let f = ProjectionFrame::new(Vec3::z()).unwrap();
        assert_eq!(f.u_hat, Vec3::new(0.0, -1.0, 0.0));
        assert!((f.u_hat.cross(&f.v_hat) - f.s_hat).norm() < 1e-12);
        assert_eq!(f.u_hat.dot(&f.s_hat), 0.0);
        assert_eq!(f.v_hat.dot(&f.s_hat), 0.0);
    }

    #[test]
    fn frame_for_x_sun_is_right_handed() {
        let f = ProjectionFrame::new(Vec3::x()).unwrap();
        assert!((f.u_hat.cross(&f.v_hat) - f.s_hat).norm() < 1e-12);
        assert!(f.u_hat.dot(&f.v_hat).abs() < 1e-15);
    }

    #[test]
    fn frame_rejects_bad_input() {
        assert!(ProjectionFrame::new(Vec3::zeros()).is_err());
        assert!(ProjectionFrame::new(Vec3::new(2.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn sphere_membership() {
        let sphere = shapes::icosphere(3);
        let f = ProjectionFrame::new(Vec3::new(0.3, -0.5, 0.8).normalize()).unwrap();
        assert!(in_shadow_cylinder(&Vec2::zeros(), &f, &sphere));
        assert!(!in_shadow_cylinder(&Vec2::new(1.5, 0.0), &f, &sphere));
    }

    #[test]
    fn sphere_eclipse_function_values() {
        let sphere = shapes::icosphere(4);
        let f = ProjectionFrame::new(Vec3::new(0.0, 0.6, 0.8)).unwrap();
        let b = extract_boundary(&f, &sphere, 256).unwrap();
        let inside = eclipse_function(&Vec2::new(0.5, 0.0), &b, &f, &sphere);
        assert!((inside + 0.5).abs() < 3e-3, "{inside}");
        let outside = eclipse_function(&Vec2::new(2.0, 0.0), &b, &f, &sphere);
        assert!((outside - 1.0).abs() < 3e-3, "{outside}");
        let on = eclipse_function(&b.points()[17], &b, &f, &sphere);
        assert!(on.abs() < 1e-6, "{on}");
    }

    #[test]
    fn bad_fd_step_is_rejected() {
        let sphere = shapes::icosphere(2);
        let f = ProjectionFrame::new(Vec3::z()).unwrap();
        let b = extract_boundary(&f, &sphere, 64).unwrap();
        assert!(check_gradient_identity(&b, &f, &sphere, 1e-2).is_err());
    }

    #[test]
    fn square_silhouette_corners_are_masked() {
        let cube = shapes::cube(0.5);
        let f = ProjectionFrame::new(Vec3::z()).unwrap();
        let b = extract_boundary(&f, &cube, 128).unwrap();
        let report = check_gradient_identity(&b, &f, &cube, 1e-4).unwrap();
        assert!(report.masked >= 4, "{report:?}");
        assert!(report.max_deviation < 1e-2, "{report:?}");
    }

    #[test]
    fn oracle_caches_boundaries() {
        let oracle = EclipseOracle::new(Arc::new(shapes::icosphere(2)), 64).unwrap();
        let s = Vec3::new(1.0, 0.0, 0.0);
        let a = oracle.boundary(&s).unwrap();
        let b = oracle.boundary(&s).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let deep = oracle
            .eclipse_function(&Vec3::new(-3.0, 0.0, 0.0), &s)
            .unwrap();
        assert!(deep < -0.9);
        assert!(oracle.in_shadow(&Vec3::new(5.0, 0.1, 0.0), &s).unwrap());
    }
}
