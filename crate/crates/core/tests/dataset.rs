use std::sync::Arc;

use proptest::prelude::*;

use eclipsenet::dataset::{build_dataset, load_dataset, EclipseDataset, SamplingConfig, Split};
use eclipsenet::eclipse::EclipseOracle;
use eclipsenet::geometry::{shapes, Ray};

fn small(n_uniform: usize, n_border: usize) -> SamplingConfig {
    SamplingConfig {
        n_uniform,
        n_border,
        border_sigma: 0.05,
        boundary_grid: 96,
    }
}

fn build(seed: u64) -> (EclipseDataset, EclipseDataset) {
    build_dataset(
        &shapes::bilobed(3, 2),
        "bilobed",
        6,
        3,
        &small(200, 600),
        seed,
    )
    .unwrap()
}

#[test]
fn labels_agree_with_exhaustive_ray_casts() {
    let mesh = shapes::bilobed(3, 2);
    let (train, valid) = build(4);
    for s in train.samples.iter().chain(&valid.samples) {
        assert!((s.s_hat.norm() - 1.0).abs() < 1e-9);
        assert!(s.f_value.is_finite());
        let origin = s.position - s.s_hat * 5.0;
        let shadowed = mesh.ray_hits_exhaustive(&Ray::from_unit(origin, s.s_hat));
        assert_eq!(s.f_value < 0.0, shadowed, "{s:?}");
    }
}

#[test]
fn border_samples_sit_near_the_border() {
    let (train, _) = build(5);
    let per = train.n_uniform + train.n_border;
    let border: Vec<f64> = train
        .samples
        .chunks(per)
        .flat_map(|d| d[train.n_uniform..].iter().map(|s| s.f_value.abs()))
        .collect();
    let near = border.iter().filter(|f| **f < 4.0 * 0.05).count();
    assert!(
        near as f64 >= 0.99 * border.len() as f64,
        "{near}/{}",
        border.len()
    );
}

#[test]
fn relabeling_reproduces_stored_values() {
    let mesh = Arc::new(shapes::bilobed(3, 2));
    let (train, _) = build(6);
    let same = EclipseOracle::new(Arc::clone(&mesh), 96).unwrap();
    let finer = EclipseOracle::new(mesh, 384).unwrap();
    for s in train.samples.iter().step_by(7) {
        // Equal up to the rounding of projecting the lifted position back.
        let f = same.eclipse_function(&s.position, &s.s_hat).unwrap();
        assert!((f - s.f_value).abs() < 1e-12, "{f} vs {}", s.f_value);
        let f = finer.eclipse_function(&s.position, &s.s_hat).unwrap();
        assert!((f - s.f_value).abs() < 1e-2, "{f} vs {}", s.f_value);
    }
}

#[test]
fn train_and_valid_directions_are_disjoint() {
    let (train, valid) = build(7);
    assert_eq!(train.split, Split::Train);
    assert_eq!(valid.split, Split::Valid);
    let mut min_angle = f64::INFINITY;
    for a in train.directions() {
        for b in valid.directions() {
            min_angle = min_angle.min(a.dot(&b).clamp(-1.0, 1.0).acos());
        }
    }
    assert!(min_angle > 0.0);
    assert_eq!(train.directions().len(), 6);
    assert_eq!(valid.len(), 3 * 800);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let (a, _) = build(8);
    let (b, _) = build(8);
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let (c, _) = build(9);
    assert_ne!(a.to_bytes().unwrap(), c.to_bytes().unwrap());
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.bin");
    let (a, _) = build(10);
    a.save(&path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.samples, a.samples);
    assert_eq!(back.body_name, "bilobed");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn byte_round_trip(n_dirs in 1usize..4, n_uniform in 0usize..40, n_border in 0usize..40, seed in 0u64..1000) {
        let (train, _) = build_dataset(
            &shapes::icosphere(2), "sphere", n_dirs, 1, &small(n_uniform, n_border), seed,
        ).unwrap();
        prop_assert_eq!(train.len(), n_dirs * (n_uniform + n_border));
        let back = EclipseDataset::from_bytes(&train.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.samples, train.samples);
        prop_assert_eq!(back.seed, seed);
        prop_assert_eq!(back.n_directions, n_dirs);
    }
}
