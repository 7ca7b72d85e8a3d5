use proptest::prelude::*;

use eclipsenet::dynamics::potential;
use eclipsenet::geometry::{
    fibonacci_sphere, generate_mascons_voxel, point_in_polyhedron, point_in_polyhedron_along,
    ray_triangle_intersect, shapes, Ray, TriangleMesh, Vec3,
};

fn vec3() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn direction() -> impl Strategy<Value = Vec3> {
    vec3()
        .prop_filter("nonzero", |v| v.norm() > 0.1)
        .prop_map(|v| v.normalize())
}

/// Plane intersection followed by barycentric coordinates: hit distance if
/// the intersection lies inside the triangle, with a margin `eps` on the
/// barycentric bounds so that only clear-cut cases are compared.
fn plane_oracle(ray: &Ray, a: &Vec3, b: &Vec3, c: &Vec3, eps: f64) -> Option<Option<f64>> {
    let n = (b - a).cross(&(c - a));
    let denom = n.dot(&ray.direction);
    if denom.abs() < 1e-6 * n.norm() {
        return None;
    }
    let t = n.dot(&(a - ray.origin)) / denom;
    let p = ray.origin + ray.direction * t;
    let area = n.norm_squared();
    let wa = (c - b).cross(&(p - b)).dot(&n) / area;
    let wb = (a - c).cross(&(p - c)).dot(&n) / area;
    let wc = 1.0 - wa - wb;
    let m = wa.min(wb).min(wc);
    if m.abs() < eps || t.abs() < eps {
        return None;
    }
    Some((m > 0.0 && t > 0.0).then_some(t))
}

#[test]
fn moller_trumbore_matches_plane_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let mut r = || {
        Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    };
    let mut compared = 0;
    for _ in 0..20_000 {
        let (a, b, c, o) = (r(), r(), r(), r() * 2.0);
        let d = r();
        if d.norm() < 0.1 || (b - a).cross(&(c - a)).norm() < 1e-3 {
            continue;
        }
        let ray = Ray::from_unit(o, d.normalize());
        let Some(expected) = plane_oracle(&ray, &a, &b, &c, 1e-9) else {
            continue;
        };
        let got = ray_triangle_intersect(&ray, &a, &b, &c);
        assert_eq!(got.is_some(), expected.is_some(), "ray {ray:?}");
        if let (Some(g), Some(e)) = (got, expected) {
            assert!((g - e).abs() < 1e-9, "{g} vs {e}");
        }
        compared += 1;
    }
    assert!(compared >= 10_000, "{compared}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bvh_equals_exhaustive_scan(origin in vec3(), dir in direction()) {
        let mesh = shapes::bilobed(2, 3);
        let ray = Ray::from_unit(origin, dir);
        prop_assert_eq!(mesh.ray_hits(&ray), mesh.ray_hits_exhaustive(&ray));
        // Rays aimed at a vertex neighbourhood exercise the hit path too.
        let target = mesh.vertices()[(origin.x.abs() * 1000.0) as usize % mesh.vertices().len()] * 0.9;
        if (target - origin).norm() > 1e-3 {
            let aimed = Ray::from_unit(origin, (target - origin).normalize());
            prop_assert_eq!(mesh.ray_hits(&aimed), mesh.ray_hits_exhaustive(&aimed));
        }
    }

    #[test]
    fn parity_is_direction_invariant(p in vec3(), dirs in proptest::collection::vec(direction(), 5)) {
        let mesh = shapes::bilobed(2, 3);
        let base = point_in_polyhedron(&p, &mesh).unwrap();
        for d in &dirs {
            if let Some(inside) = point_in_polyhedron_along(&p, d, &mesh) {
                prop_assert_eq!(inside, base);
            }
        }
    }

    #[test]
    fn fibonacci_vectors_are_unit_and_deterministic(n in 1usize..400, seed in 0u64..1000) {
        let a = fibonacci_sphere(n, seed);
        prop_assert_eq!(a.len(), n);
        for v in &a {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(a, fibonacci_sphere(n, seed));
    }
}

#[test]
fn mascon_masses_are_normalized() {
    for n in [2, 5, 17, 32] {
        let m = generate_mascons_voxel(&shapes::bilobed(3, 1), n, 1e12).unwrap();
        assert!((m.normalized_mass_sum() - 1.0).abs() < 1e-12, "grid {n}");
    }
}

#[test]
fn mascon_center_of_mass_matches_polyhedron_centroid() {
    for (mesh, n) in [(shapes::bilobed(4, 2), 24), (shapes::icosphere(3), 16)] {
        let (_, centroid) = mesh.volume_and_centroid();
        let m = generate_mascons_voxel(&mesh, n, 1.0).unwrap();
        let span = {
            let (lo, hi) = mesh.bounding_box();
            (hi - lo).max()
        };
        assert!(
            (m.center_of_mass() - centroid).norm() < 2.0 / n as f64 * span,
            "{:?} vs {:?}",
            m.center_of_mass(),
            centroid
        );
    }
}

/// A uniform ball attracts like a point mass outside it.
#[test]
fn shell_theorem_for_voxel_ball() {
    let m = generate_mascons_voxel(&shapes::icosphere(4), 32, 1.0).unwrap();
    for r in [
        Vec3::new(3.0, 0.0, 0.0),
        Vec3::new(0.0, -2.0, 1.5),
        Vec3::new(1.2, 1.2, 1.2),
    ] {
        let phi = potential(&r, &m);
        let expected = -1.0 / r.norm();
        assert!((phi / expected - 1.0).abs() < 0.01, "{phi} vs {expected}");
    }
}

#[test]
fn obj_round_trip_preserves_geometry() {
    let mesh = shapes::bilobed(2, 4);
    let text = mesh.to_obj_string();
    let back = TriangleMesh::from_obj_str(&text, 1.0).unwrap();
    assert_eq!(back.triangles(), mesh.triangles());
    for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
        assert!((a - b).norm() < 1e-12);
    }
}
