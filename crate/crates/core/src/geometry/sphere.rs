use std::f64::consts::PI;

use super::Vec3;

/// Fractional part of the golden ratio, used to spread azimuthal offsets.
const GOLDEN_FRACTION: f64 = 0.618_033_988_749_894_9;

/// `n` quasi-uniform unit vectors on the golden-angle spiral.
///
/// `offset_seed` rotates the spiral about `z` by `2π · frac(seed · φ⁻¹)`, so
/// sets generated with different seeds share no direction.
pub fn fibonacci_sphere(n: usize, offset_seed: u64) -> Vec<Vec3> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let phase = 2.0 * PI * (offset_seed as f64 * GOLDEN_FRACTION).fract();
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let az = i as f64 * golden_angle + phase;
            let (s, c) = az.sin_cos();
            Vec3::new(r * c, r * s, z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_deterministic() {
        let a = fibonacci_sphere(500, 3);
        assert_eq!(a.len(), 500);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert_eq!(a, fibonacci_sphere(500, 3));
        let one = fibonacci_sphere(1, 0);
        assert_eq!(one.len(), 1);
        assert!((one[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_neighbor_gaps_are_quasi_uniform() {
        let pts = fibonacci_sphere(1000, 0);
        let gaps: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pts.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| p.dot(q).clamp(-1.0, 1.0).acos())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let max = gaps.iter().cloned().fold(0.0, f64::max);
        assert!(max < 2.0 * mean, "max gap {max} vs mean {mean}");
    }

    #[test]
    fn different_offsets_are_disjoint() {
        let train = fibonacci_sphere(50, 0);
        let valid = fibonacci_sphere(20, 1);
        let min_angle = train
            .iter()
            .flat_map(|a| valid.iter().map(move |b| a.dot(b).clamp(-1.0, 1.0).acos()))
            .fold(f64::INFINITY, f64::min);
        assert!(min_angle > 1e-6);
        let same_n = fibonacci_sphere(50, 1);
        let min_same = train
            .iter()
            .flat_map(|a| same_n.iter().map(move |b| a.dot(b).clamp(-1.0, 1.0).acos()))
            .fold(f64::INFINITY, f64::min);
        assert!(min_same > 1e-6);
    }
}
