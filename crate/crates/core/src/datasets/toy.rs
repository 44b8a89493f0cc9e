//! Two-class 2D toy problems.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::geometry::Points;
use crate::sampling::LabeledDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    /// Gaussian blobs with covariance diag(1, 0.25) at (-2, 0) and (2, 0).
    Ovals,
    /// Interleaved half circles; the second is flipped and shifted by (1, -0.5).
    Moons,
    /// Concentric circles of radius 1.0 (class 1) and 0.5 (class 2).
    Circles,
}

/// `n / 2` points per class, plus isotropic Gaussian noise of `noise_std`.
pub fn generate_toy(kind: ToyKind, n: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 || n % 2 != 0 {
        return param(format!("toy datasets need an even n >= 2, got {n}"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return param(format!("noise_std must be non-negative, got {noise_std}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut points = Points::with_capacity(2, n);
    let mut labels = Vec::with_capacity(n);
    for class in 1..=2u32 {
        for _ in 0..half {
            let p = match kind {
                ToyKind::Ovals => {
                    let cx = if class == 1 { -2.0 } else { 2.0 };
                    let zx: f64 = StandardNormal.sample(&mut rng);
                    let zy: f64 = StandardNormal.sample(&mut rng);
                    [cx + zx, 0.5 * zy]
                }
                ToyKind::Moons => {
                    let t = rng.random_range(0.0..PI);
                    if class == 1 {
                        [t.cos(), t.sin()]
                    } else {
                        [1.0 - t.cos(), 0.5 - t.sin()]
                    }
                }
                ToyKind::Circles => {
                    let t = rng.random_range(0.0..2.0 * PI);
                    let r = if class == 1 { 1.0 } else { 0.5 };
                    [r * t.cos(), r * t.sin()]
                }
            };
            points.push(&p);
            labels.push(class);
        }
    }
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).unwrap();
        let mut jittered = Points::with_capacity(2, n);
        for p in points.iter() {
            jittered.push(&[p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)]);
        }
        points = jittered;
    }
    LabeledDataset::new(points, labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn circle_radii_without_noise() {
        let d = generate_toy(ToyKind::Circles, 400, 0.0, 1).unwrap();
        for (p, &l) in d.points.iter().zip(&d.labels) {
            let r = p[0].hypot(p[1]);
            let want = if l == 1 { 1.0 } else { 0.5 };
            assert!((r - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn balanced_classes_and_determinism() {
        for kind in [ToyKind::Ovals, ToyKind::Moons, ToyKind::Circles] {
            let d = generate_toy(kind, 300, 0.1, 4).unwrap();
            assert_eq!(d.labels.iter().filter(|&&l| l == 1).count(), 150);
            assert_eq!(d.labels.iter().filter(|&&l| l == 2).count(), 150);
            assert_eq!(d, generate_toy(kind, 300, 0.1, 4).unwrap());
        }
    }

    #[test]
    fn moons_geometry() {
        let d = generate_toy(ToyKind::Moons, 200, 0.0, 2).unwrap();
        for (p, &l) in d.points.iter().zip(&d.labels) {
            let (cx, cy) = if l == 1 { (0.0, 0.0) } else { (1.0, 0.5) };
            assert!(((p[0] - cx).hypot(p[1] - cy) - 1.0).abs() < 1e-12);
            if l == 1 {
                assert!(p[1] >= 0.0);
            } else {
                assert!(p[1] <= 0.5);
            }
        }
    }

    #[test]
    fn odd_n_rejected() {
        assert!(matches!(generate_toy(ToyKind::Moons, 3, 0.1, 0), Err(Error::Parameter(_))));
    }
}
