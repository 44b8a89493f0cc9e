//! Distance-to-data versus uncertainty-class probability.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::metrics::{distance_to_data, spearman, Correlation};
use crate::classifier::{predict, SoftmaxMapModel};
use crate::error::{input, param, Result};
use crate::geometry::{squared_distance, Bounds, Points};
use crate::sampling::LabeledDataset;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub correlation: Correlation,
    /// `(d(x), p_uncertain(x))` per query.
    pub pairs: Vec<(f64, f64)>,
}

impl MonotonicityReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "d,p_uncertain")?;
        for (d, p) in &self.pairs {
            writeln!(w, "{d},{p}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rank correlation between distance to the training points and the uncertainty channel.
pub fn monotonicity_diagnostic(
    model: &SoftmaxMapModel,
    train_points: &Points,
    queries: &Points,
) -> Result<MonotonicityReport> {
    if queries.len() < 10 {
        return input(format!("the diagnostic needs at least 10 queries, got {}", queries.len()));
    }
    let p = predict(model, queries)?.uncertainty();
    let d: Vec<f64> = queries.iter().map(|q| distance_to_data(q, train_points)).collect::<Result<_>>()?;
    let correlation = spearman(&d, &p)?;
    Ok(MonotonicityReport { correlation, pairs: d.into_iter().zip(p).collect() })
}

/// Isotropic Gaussian blob mixed with uniform noise over `bounds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureModelConfig {
    pub alpha_ind: f64,
    pub alpha_noise: f64,
    pub centre: Vec<f64>,
    pub sigma: f64,
    pub bounds: Bounds,
}

impl MixtureModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let (a, b) = (self.alpha_ind, self.alpha_noise);
        if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) || (a + b - 1.0).abs() > 1e-12 {
            return param(format!("mixture weights must lie in (0, 1) and sum to 1, got {a} and {b}"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return param("blob sigma must be positive");
        }
        if self.centre.len() != self.bounds.dim() {
            return param("blob centre dimension does not match bounds");
        }
        Ok(())
    }

    /// Uniform noise density `n0 = 1 / volume`.
    pub fn noise_level(&self) -> f64 {
        1.0 / self.bounds.volume()
    }

    pub fn ind_density(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let s2 = self.sigma * self.sigma;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.5 * d);
        norm * (-0.5 * squared_distance(x, &self.centre) / s2).exp()
    }

    /// Bayes posterior of the noise component at `x`.
    pub fn noise_posterior(&self, x: &[f64]) -> f64 {
        let noise = self.alpha_noise * self.noise_level();
        noise / (self.alpha_ind * self.ind_density(x) + noise)
    }

    /// Expected distance `E|x - x'|` for `x'` drawn from the 1D blob (folded normal mean).
    pub fn expected_distance_1d(&self, x: f64) -> Result<f64> {
        if self.centre.len() != 1 {
            return param("the closed-form expected distance is one-dimensional");
        }
        let m = x - self.centre[0];
        let s = self.sigma;
        let gauss = s * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * m * m / (s * s)).exp();
        Ok(gauss + m * libm::erf(m / (s * std::f64::consts::SQRT_2)))
    }

    /// `n` blob points inside the bounds, labelled 1 (a single known class).
    pub fn sample_blob(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.sigma).unwrap();
        let dim = self.centre.len();
        let mut pts = Points::with_capacity(dim, n);
        let mut x = vec![0.0; dim];
        while pts.len() < n {
            for (k, v) in x.iter_mut().enumerate() {
                *v = self.centre[k] + normal.sample(&mut rng);
            }
            if self.bounds.contains(&x) {
                pts.push(&x);
            }
        }
        LabeledDataset::with_bounds(pts, vec![1; n], 1, self.bounds.clone())
    }
}

/// Checks that the closed-form posterior never decreases with expected distance on a 1D grid.
pub fn posterior_is_monotone_in_distance(mix: &MixtureModelConfig, grid_points: usize) -> Result<bool> {
    mix.validate()?;
    if mix.bounds.dim() != 1 || grid_points < 2 {
        return param("the analytic check runs on a 1D grid of at least two points");
    }
    let (lo, hi) = (mix.bounds.min[0], mix.bounds.max[0]);
    let mut pairs = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let x = lo + (hi - lo) * i as f64 / (grid_points - 1) as f64;
        pairs.push((mix.expected_distance_1d(x)?, mix.noise_posterior(&[x])));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-15))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HingeSet;
    use rand::Rng;

    fn mix1d() -> MixtureModelConfig {
        MixtureModelConfig {
            alpha_ind: 0.5,
            alpha_noise: 0.5,
            centre: vec![0.3],
            sigma: 0.7,
            bounds: Bounds::new(vec![-5.0], vec![5.0]).unwrap(),
        }
    }

    #[test]
    fn folded_normal_mean_matches_monte_carlo() {
        let m = mix1d();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.3, 0.7).unwrap();
        let draws: Vec<f64> = (0..200_000).map(|_| normal.sample(&mut rng)).collect();
        for x in [-2.0, 0.0, 0.3, 1.5] {
            let mc = draws.iter().map(|v| (x - v).abs()).sum::<f64>() / draws.len() as f64;
            assert!((mc - m.expected_distance_1d(x).unwrap()).abs() < 0.01);
        }
    }

    #[test]
    fn analytic_posterior_is_non_decreasing_in_distance() {
        assert!(posterior_is_monotone_in_distance(&mix1d(), 2001).unwrap());
        let mut m = mix1d();
        m.alpha_ind = 0.9;
        m.alpha_noise = 0.1;
        assert!(posterior_is_monotone_in_distance(&m, 501).unwrap());
    }

    #[test]
    fn mixture_weights_are_validated() {
        let mut m = mix1d();
        m.alpha_noise = 0.6;
        assert!(m.validate().is_err());
        assert_eq!(mix1d().noise_level(), 0.1);
    }

    #[test]
    fn zero_model_is_undefined() {
        let h = HingeSet::new(Points::from_rows(2, &[[0.0, 0.0], [1.0, 1.0]]).unwrap(), 1.0).unwrap();
        let model = SoftmaxMapModel::zeros(h, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q: Vec<[f64; 2]> = (0..20).map(|_| [rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)]).collect();
        let train = Points::from_rows(2, &[[0.5, 0.5]]).unwrap();
        let r = monotonicity_diagnostic(&model, &train, &Points::from_rows(2, &q).unwrap()).unwrap();
        assert_eq!(r.correlation, Correlation::Undefined);
        assert_eq!(r.pairs.len(), 20);
        assert!(monotonicity_diagnostic(&model, &train, &Points::from_rows(2, &q[..5]).unwrap()).is_err());
    }

    #[test]
    fn blob_samples_stay_inside_bounds() {
        let mut m = mix1d();
        m.sigma = 3.0;
        let d = m.sample_blob(500, 2).unwrap();
        assert_eq!(d.len(), 500);
        assert!(d.points.iter().all(|p| m.bounds.contains(p)));
    }
}
