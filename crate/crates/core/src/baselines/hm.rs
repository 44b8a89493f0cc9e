//! Logistic Hilbert map: a single sigmoid over the RBF features.

use crate::error::{input, Result};
use crate::kernels::{logistic_nll_grad, Rows};
use crate::geometry::{rbf_features, FeatureMatrix, HingeSet, Points};
use crate::optim::{sq_norm, train_loop, TrainConfig};
use crate::sampling::{LabeledDataset, OCCUPIED};

#[derive(Clone, Debug, PartialEq)]
pub struct HmModel {
    /// Weights, bias last.
    pub w: Vec<f64>,
    pub hinges: HingeSet,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl HmModel {
    pub fn new(w: Vec<f64>, hinges: HingeSet) -> Result<Self> {
        if w.len() != hinges.feature_width() {
            return input(format!("{} weights for {} features", w.len(), hinges.feature_width()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return input("weights must be finite");
        }
        Ok(Self { w, hinges })
    }

    pub fn zeros(hinges: HingeSet) -> Self {
        Self { w: vec![0.0; hinges.feature_width()], hinges }
    }

    /// `w . phi` per feature row.
    pub fn decision(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.cols() != self.w.len() {
            return input("feature width does not match model");
        }
        Ok(features.iter_rows().map(|r| r.iter().zip(&self.w).map(|(a, b)| a * b).sum()).collect())
    }

    /// Occupancy probability `sigmoid(w . phi)` per query.
    pub fn predict(&self, queries: &Points) -> Result<Vec<f64>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let f = rbf_features(queries, &self.hinges)?;
        Ok(self.decision(&f)?.into_iter().map(sigmoid).collect())
    }
}

/// Trains on precomputed features with 0/1 targets.
pub fn fit_hm_features(
    features: &FeatureMatrix,
    targets: &[f64],
    hinges: &HingeSet,
    config: &TrainConfig,
) -> Result<(HmModel, Vec<f64>)> {
    config.validate()?;
    if targets.is_empty() {
        return input("cannot train on an empty dataset");
    }
    if features.rows() != targets.len() || features.cols() != hinges.feature_width() {
        return input("feature matrix does not match targets or hinges");
    }
    let mut model = HmModel::zeros(hinges.clone());
    let wd = config.weight_decay;
    let history = train_loop(targets.len(), &mut model.w, config, |batch, w, g| {
        let rows = match batch {
            None => Rows::All(targets.len()),
            Some(idx) => Rows::Subset(idx),
        };
        let nll = logistic_nll_grad(features.as_slice(), rows, targets, w, g);
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += wd * wi;
        }
        nll + 0.5 * wd * sq_norm(w)
    })?;
    Ok((model, history))
}

/// Trains a logistic Hilbert map on free (1) / occupied (2) data.
pub fn fit_hm(train: &LabeledDataset, hinges: &HingeSet, config: &TrainConfig) -> Result<(HmModel, Vec<f64>)> {
    if train.num_known_classes != 2 || train.labels.iter().any(|&l| l > 2) {
        return input(format!(
            "a Hilbert map needs binary labels 1/2, found C = {} (noise-augmented or multiclass data is not supported)",
            train.num_known_classes
        ));
    }
    if train.is_empty() {
        return input("cannot train on an empty dataset");
    }
    let features = rbf_features(&train.points, hinges)?;
    let targets: Vec<f64> = train.labels.iter().map(|&l| if l == OCCUPIED { 1.0 } else { 0.0 }).collect();
    fit_hm_features(&features, &targets, hinges, config)
}

/// One-vs-rest composite of per-class Hilbert maps.
#[derive(Clone, Debug)]
pub struct HmComposite {
    /// `models[c - 1]` scores class `c`.
    pub models: Vec<HmModel>,
}

impl HmComposite {
    /// Trains one binary map per known class on shared features.
    pub fn fit(train: &LabeledDataset, hinges: &HingeSet, config: &TrainConfig) -> Result<Self> {
        if train.has_noise() {
            return input("one-vs-rest maps are trained without contrastive noise");
        }
        let features = rbf_features(&train.points, hinges)?;
        let mut models = Vec::new();
        for c in 1..=train.num_known_classes {
            let t: Vec<f64> = train.labels.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            models.push(fit_hm_features(&features, &t, hinges, config)?.0);
        }
        Ok(Self { models })
    }

    /// 1-based label of the highest-scoring class per query.
    pub fn predict_labels(&self, queries: &Points) -> Result<Vec<u32>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let f = rbf_features(queries, &self.models[0].hinges)?;
        let scores: Vec<Vec<f64>> = self.models.iter().map(|m| m.decision(&f)).collect::<Result<_>>()?;
        Ok((0..f.rows())
            .map(|i| {
                let mut best = 0;
                for c in 1..scores.len() {
                    if scores[c][i] > scores[best][i] {
                        best = c;
                    }
                }
                best as u32 + 1
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::optim::{BatchSize, OptimizerKind};
    use rand::{Rng, SeedableRng};

    fn hinges() -> HingeSet {
        HingeSet::new(Points::from_rows(2, &[[0.0, 0.0], [3.0, 0.0]]).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn zero_weights_predict_half() {
        let m = HmModel::zeros(hinges());
        let p = m.predict(&Points::from_rows(2, &[[0.0, 0.0], [7.0, -2.0]]).unwrap()).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn separates_two_points() {
        let d = LabeledDataset::new(Points::from_rows(2, &[[0.0, 0.0], [3.0, 0.0]]).unwrap(), vec![1, 2], 2).unwrap();
        let cfg = TrainConfig { epochs: 300, learning_rate: 0.05, batch_size: BatchSize::Full, ..Default::default() };
        let (m, hist) = fit_hm(&d, &hinges(), &cfg).unwrap();
        let p = m.predict(&d.points).unwrap();
        assert!(p[0] < 0.5 && p[1] > 0.9, "{p:?}");
        assert!(hist.last().unwrap() < &hist[0]);
    }

    #[test]
    fn rejects_multiclass() {
        let d = LabeledDataset::new(Points::from_rows(2, &[[0.0, 0.0], [3.0, 0.0]]).unwrap(), vec![1, 3], 3).unwrap();
        assert!(matches!(fit_hm(&d, &hinges(), &TrainConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<[f64; 2]> = (0..30).map(|_| [rng.random_range(-1.0..4.0), rng.random_range(-1.0..1.0)]).collect();
        let f = rbf_features(&Points::from_rows(2, &rows).unwrap(), &hinges()).unwrap();
        let t: Vec<f64> = (0..30).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let w = vec![0.3, -1.2, 0.7];
        let loss = |w: &[f64], g: &mut [f64]| logistic_nll_grad(f.as_slice(), Rows::All(30), &t, w, g);
        let mut g = vec![0.0; 3];
        loss(&w, &mut g);
        let mut scratch = vec![0.0; 3];
        for i in 0..3 {
            let mut wp = w.clone();
            wp[i] += 1e-6;
            let mut wm = w.clone();
            wm[i] -= 1e-6;
            let num = (loss(&wp, &mut scratch) - loss(&wm, &mut scratch)) / 2e-6;
            assert!((num - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-12);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sgd_and_minibatch_train() {
        let d = crate::datasets::generate_toy(crate::datasets::ToyKind::Ovals, 400, 0.0, 3).unwrap();
        let h = crate::geometry::grid_hinges(&d.bounds, 1.0, 0.5).unwrap();
        let cfg = TrainConfig { optimizer: OptimizerKind::Sgd, learning_rate: 0.5, batch_size: BatchSize::Rows(50), epochs: 40, ..Default::default() };
        let (m, _) = fit_hm(&d, &h, &cfg).unwrap();
        let p = m.predict(&d.points).unwrap();
        let correct = p.iter().zip(&d.labels).filter(|(p, &l)| (**p > 0.5) == (l == 2)).count();
        assert!(correct as f64 / 400.0 > 0.95);
    }
}
