//! Labelled point sets, contrastive noise and free-space ray sampling.
//!
//! Labels are 1-based throughout. Known classes occupy `1..=C`; contrastive
//! noise is always labelled `C + 1`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, param, Error, Result};
use crate::geometry::{distance, Bounds, Points};

/// Label of free space in occupancy data.
pub const FREE: u32 = 1;
/// Label of occupied space in occupancy data.
pub const OCCUPIED: u32 = 2;

/// Spatial points with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub points: Points,
    pub labels: Vec<u32>,
    /// Number of known classes C (noise, when present, is C+1).
    pub num_known_classes: u32,
    pub bounds: Bounds,
}

impl LabeledDataset {
    /// Builds a dataset with tight bounds.
    pub fn new(points: Points, labels: Vec<u32>, num_known_classes: u32) -> Result<Self> {
        let bounds = Bounds::enclosing(&points)?;
        Self::with_bounds(points, labels, num_known_classes, bounds)
    }

    pub fn with_bounds(
        points: Points,
        labels: Vec<u32>,
        num_known_classes: u32,
        bounds: Bounds,
    ) -> Result<Self> {
        let ds = Self { points, labels, num_known_classes, bounds };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return input(format!(
                "{} points but {} labels",
                self.points.len(),
                self.labels.len()
            ));
        }
        if self.num_known_classes == 0 {
            return input("a dataset needs at least one known class");
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l == 0 || l > self.num_known_classes + 1) {
            return input(format!(
                "label {bad} outside 1..={} (C = {})",
                self.num_known_classes + 1,
                self.num_known_classes
            ));
        }
        if !self.points.is_empty() && self.points.dim() != self.bounds.dim() {
            return input("bounds dimension does not match points");
        }
        if let Some(p) = self.points.iter().find(|p| !self.bounds.contains(p)) {
            return input(format!("point {p:?} lies outside the dataset bounds"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Label reserved for contrastive noise.
    pub fn noise_label(&self) -> u32 {
        self.num_known_classes + 1
    }

    pub fn has_noise(&self) -> bool {
        let nl = self.noise_label();
        self.labels.iter().any(|&l| l == nl)
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            points: self.points.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_known_classes: self.num_known_classes,
            bounds: self.bounds.clone(),
        }
    }

    /// Points carrying a given label.
    pub fn points_with_label(&self, label: u32) -> Points {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.points.select(&idx)
    }

    /// Concatenates another dataset with the same class count, widening bounds.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if other.num_known_classes != self.num_known_classes || other.dim() != self.dim() {
            return input("cannot concatenate datasets with different class counts or dimensions");
        }
        let mut points = self.points.clone();
        points.extend(&other.points);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabeledDataset::with_bounds(points, labels, self.num_known_classes, self.bounds.union(&other.bounds))
    }

    /// Writes `x[,y[,z]],label` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (p, l) in self.points.iter().zip(&self.labels) {
            for v in p {
                write!(w, "{v},")?;
            }
            writeln!(w, "{l}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where contrastive noise is placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStrategy {
    Uniform,
    NearSurface,
}

/// How many noise points to draw and where.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub strategy: NoiseStrategy,
    /// Noise count as a fraction of the observed data, m = round(ratio * n).
    pub ratio: f64,
    #[serde(default)]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    /// Uniform noise matching the observed count, used for 2D occupancy.
    pub fn occupancy(seed: u64) -> Self {
        Self { strategy: NoiseStrategy::Uniform, ratio: 1.0, jitter_sigma: 0.0, seed }
    }

    /// Sparse near-object noise for multiclass tabletop scenes.
    pub fn tabletop(jitter_sigma: f64, seed: u64) -> Self {
        Self { strategy: NoiseStrategy::NearSurface, ratio: 0.025, jitter_sigma, seed }
    }

    /// Default for 3D semantic scenes.
    pub fn semantic(seed: u64) -> Self {
        Self { strategy: NoiseStrategy::Uniform, ratio: 0.25, jitter_sigma: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return param(format!("noise ratio must be positive, got {}", self.ratio));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return param(format!("jitter sigma must be non-negative, got {}", self.jitter_sigma));
        }
        Ok(())
    }
}

/// `count` i.i.d. uniform points inside `bounds`.
pub fn sample_uniform_noise(bounds: &Bounds, count: usize, seed: u64) -> Result<Points> {
    bounds.validate()?;
    if count == 0 {
        return param("noise count must be positive");
    }
    if bounds.volume() <= 0.0 {
        return input("cannot sample uniformly from zero-volume bounds");
    }
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Points::with_capacity(d, count);
    let mut p = vec![0.0; d];
    for _ in 0..count {
        for a in 0..d {
            p[a] = bounds.min[a] + rng.random::<f64>() * bounds.extent(a);
        }
        out.push(&p);
    }
    Ok(out)
}

/// Random surface points perturbed by isotropic Gaussian noise, clipped to `bounds`.
pub fn sample_near_surface_noise(
    surface: &Points,
    count: usize,
    jitter_sigma: f64,
    bounds: &Bounds,
    seed: u64,
) -> Result<Points> {
    if surface.is_empty() {
        return input("near-surface noise needs at least one surface point");
    }
    if count == 0 {
        return param("noise count must be positive");
    }
    if !(jitter_sigma >= 0.0) {
        return param(format!("jitter sigma must be non-negative, got {jitter_sigma}"));
    }
    let d = surface.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Points::with_capacity(d, count);
    let mut p = vec![0.0; d];
    for _ in 0..count {
        let src = surface.get(rng.random_range(0..surface.len()));
        for a in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            p[a] = src[a] + jitter_sigma * z;
        }
        bounds.clamp(&mut p);
        out.push(&p);
    }
    Ok(out)
}

/// Appends `round(ratio * n)` noise points labelled `C + 1`.
pub fn augment_with_noise(data: &LabeledDataset, spec: &NoiseSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    if data.is_empty() {
        return input("cannot augment an empty dataset");
    }
    if data.has_noise() {
        return input(format!(
            "dataset already contains noise label {}",
            data.noise_label()
        ));
    }
    let m = (spec.ratio * data.len() as f64).round() as usize;
    let mut out = data.clone();
    if m == 0 {
        return Ok(out);
    }
    let noise = match spec.strategy {
        NoiseStrategy::Uniform => sample_uniform_noise(&data.bounds, m, spec.seed)?,
        NoiseStrategy::NearSurface => {
            // Surface means observed non-free points; free-space samples fill the
            // whole camera frustum and would spread the noise everywhere.
            let surface: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] != FREE).collect();
            let surface = if surface.is_empty() { data.points.clone() } else { data.points.select(&surface) };
            sample_near_surface_noise(&surface, m, spec.jitter_sigma, &data.bounds, spec.seed)?
        }
    };
    out.points.extend(&noise);
    out.labels.extend(std::iter::repeat_n(data.noise_label(), m));
    Ok(out)
}

/// Converts beams into occupied endpoints and free samples along each ray.
///
/// Free samples sit at `step, 2*step, ...` strictly before the hit, each
/// jittered uniformly by up to half a step along the beam.
pub fn rays_to_labeled_points(
    origin: &[f64],
    endpoints: &Points,
    step: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let (points, labels) = ray_samples(origin, endpoints, step, seed)?;
    if points.is_empty() {
        return input("no beam produced any sample");
    }
    LabeledDataset::new(points, labels, 2)
}

pub(crate) fn ray_samples(
    origin: &[f64],
    endpoints: &Points,
    step: f64,
    seed: u64,
) -> Result<(Points, Vec<u32>)> {
    if !(step > 0.0 && step.is_finite()) {
        return param(format!("free-space step must be positive, got {step}"));
    }
    if origin.len() != endpoints.dim() && !endpoints.is_empty() {
        return Err(Error::Input("ray origin dimension does not match endpoints".into()));
    }
    let d = origin.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Points::new(d);
    let mut labels = Vec::new();
    let mut p = vec![0.0; d];
    for end in endpoints.iter() {
        let len = distance(origin, end);
        if len <= 0.0 {
            continue;
        }
        let mut k = 1usize;
        while (k as f64) * step < len {
            let nominal = k as f64 * step;
            let mut t = nominal + (rng.random::<f64>() - 0.5) * step;
            if !(t > 0.0 && t < len) {
                t = nominal;
            }
            let f = t / len;
            for a in 0..d {
                p[a] = origin[a] + f * (end[a] - origin[a]);
            }
            points.push(&p);
            labels.push(FREE);
            k += 1;
        }
        points.push(end);
        labels.push(OCCUPIED);
    }
    Ok((points, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Bounds {
        Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn uniform_noise_support_and_determinism() {
        let p = sample_uniform_noise(&unit(), 1000, 5).unwrap();
        assert_eq!(p.len(), 1000);
        assert!(p.iter().all(|x| unit().contains(x)));
        assert_eq!(p, sample_uniform_noise(&unit(), 1000, 5).unwrap());
    }

    #[test]
    fn uniform_noise_passes_chi_square() {
        let p = sample_uniform_noise(&unit(), 100_000, 17).unwrap();
        let mut counts = [0usize; 100];
        for x in p.iter() {
            let i = ((x[0] * 10.0) as usize).min(9);
            let j = ((x[1] * 10.0) as usize).min(9);
            counts[i * 10 + j] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi^2 with 99 degrees of freedom.
        assert!(chi2 < 148.23, "chi2 = {chi2}");
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let flat = Bounds::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(matches!(sample_uniform_noise(&flat, 10, 0), Err(Error::Input(_))));
    }

    #[test]
    fn near_surface_noise_properties() {
        let surf = Points::from_rows(2, &[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        let b = unit();
        let zero = sample_near_surface_noise(&surf, 50, 0.0, &b, 1).unwrap();
        assert!(zero.iter().all(|p| surf.iter().any(|s| s == p)));

        let sigma = 0.01;
        let many = sample_near_surface_noise(&surf, 10_000, sigma, &b, 2).unwrap();
        let mean: f64 = many
            .iter()
            .map(|p| surf.iter().map(|s| distance(p, s)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / many.len() as f64;
        // Rayleigh mean in 2D is sigma*sqrt(pi/2) ~ 1.25 sigma.
        assert!(mean <= 2.0 * sigma, "mean distance {mean}");

        let edge = Points::from_rows(2, &[[0.0, 1.0]]).unwrap();
        let clipped = sample_near_surface_noise(&edge, 200, 0.5, &b, 3).unwrap();
        assert!(clipped.iter().all(|p| b.contains(p)));
        assert!(clipped.iter().any(|p| p[0] == 0.0 || p[1] == 1.0));
    }

    fn occupancy_data(n: usize) -> LabeledDataset {
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 / n as f64, 0.5]).collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { FREE } else { OCCUPIED }).collect();
        LabeledDataset::with_bounds(Points::from_rows(2, &rows).unwrap(), labels, 2, unit()).unwrap()
    }

    #[test]
    fn augmentation_sizes_and_labels() {
        let data = occupancy_data(40);
        let aug = augment_with_noise(&data, &NoiseSpec::occupancy(0)).unwrap();
        assert_eq!(aug.len(), 80);
        assert!(aug.labels[40..].iter().all(|&l| l == 3));
        assert_eq!(&aug.labels[..40], &data.labels[..]);
        assert_eq!(aug.points.select(&(0..40).collect::<Vec<_>>()), data.points);

        let tab = augment_with_noise(&data, &NoiseSpec::tabletop(0.05, 0)).unwrap();
        assert_eq!(tab.len(), 40 + 1);

        let zero = NoiseSpec { ratio: 0.0, ..NoiseSpec::occupancy(0) };
        assert!(matches!(augment_with_noise(&data, &zero), Err(Error::Parameter(_))));

        assert!(matches!(
            augment_with_noise(&aug, &NoiseSpec::occupancy(0)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn beam_sampling_counts() {
        let ends = Points::from_rows(2, &[[1.0, 0.0]]).unwrap();
        let ds = rays_to_labeled_points(&[0.0, 0.0], &ends, 0.3, 9).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&l| l == FREE).count(), 3);
        assert_eq!(ds.labels.iter().filter(|&&l| l == OCCUPIED).count(), 1);
    }

    #[test]
    fn free_points_are_colinear() {
        let ends = Points::from_rows(2, &[[3.0, 4.0], [-2.0, 1.0]]).unwrap();
        let ds = rays_to_labeled_points(&[1.0, 1.0], &ends, 0.25, 4).unwrap();
        for (p, &l) in ds.points.iter().zip(&ds.labels) {
            if l != FREE {
                continue;
            }
            let lateral = ends
                .iter()
                .map(|e| {
                    let (dx, dy) = (e[0] - 1.0, e[1] - 1.0);
                    let (px, py) = (p[0] - 1.0, p[1] - 1.0);
                    let t = (px * dx + py * dy) / (dx * dx + dy * dy);
                    if !(0.0..1.0).contains(&t) {
                        return f64::INFINITY;
                    }
                    (px * dy - py * dx).abs() / (dx * dx + dy * dy).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(lateral <= 1e-9);
        }
    }

    #[test]
    fn zero_length_beam_is_skipped() {
        let ends = Points::from_rows(2, &[[0.0, 0.0], [0.0, 2.0]]).unwrap();
        let ds = rays_to_labeled_points(&[0.0, 0.0], &ends, 0.5, 0).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&l| l == OCCUPIED).count(), 1);
    }

    #[test]
    fn scan_of_180_beams() {
        let mut ends = Points::new(2);
        let mut valid = 0;
        for j in 0..180 {
            let a = j as f64 * std::f64::consts::PI / 179.0;
            if j % 7 == 0 {
                continue;
            }
            valid += 1;
            ends.push(&[2.0 * a.cos(), 2.0 * a.sin()]);
        }
        let ds = rays_to_labeled_points(&[0.0, 0.0], &ends, 0.5, 1).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&l| l == OCCUPIED).count(), valid);
    }

    proptest! {
        #[test]
        fn augmentation_preserves_original_pairs(n in 2usize..60, ratio in 0.05f64..2.0, seed in 0u64..1000, near in any::<bool>()) {
            let data = occupancy_data(n);
            let spec = NoiseSpec {
                strategy: if near { NoiseStrategy::NearSurface } else { NoiseStrategy::Uniform },
                ratio,
                jitter_sigma: 0.1,
                seed,
            };
            let aug = augment_with_noise(&data, &spec).unwrap();
            let m = (ratio * n as f64).round() as usize;
            prop_assert_eq!(aug.len(), n + m);
            for i in 0..n {
                prop_assert_eq!(aug.points.get(i), data.points.get(i));
                prop_assert_eq!(aug.labels[i], data.labels[i]);
            }
            prop_assert!(aug.labels[n..].iter().all(|&l| l == 3));
            prop_assert!(aug.validate().is_ok());
            prop_assert_eq!(aug, augment_with_noise(&data, &spec).unwrap());
        }
    }
}
