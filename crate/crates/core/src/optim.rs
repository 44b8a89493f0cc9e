//! First-order optimisers and the shared mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Mini-batch rows at or below which `Auto` trains full-batch.
pub const AUTO_FULL_BATCH_LIMIT: usize = 50_000;
/// Batch size `Auto` falls back to above the limit.
pub const AUTO_BATCH_SIZE: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    /// Full batch up to 50k rows, otherwise 4096.
    Auto,
    Full,
    #[serde(untagged)]
    Rows(usize),
}

impl BatchSize {
    /// Concrete rows per step, `None` meaning the whole dataset.
    pub fn resolve(self, n: usize) -> Option<usize> {
        match self {
            BatchSize::Full => None,
            BatchSize::Auto if n <= AUTO_FULL_BATCH_LIMIT => None,
            BatchSize::Auto => Some(AUTO_BATCH_SIZE),
            BatchSize::Rows(b) if b >= n => None,
            BatchSize::Rows(b) => Some(b),
        }
    }
}

/// Hyper-parameters shared by every gradient-trained map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub seed: u64,
    /// Dense ReLU layers between the features and the softmax (0, 1 or 2).
    pub hidden_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 150,
            batch_size: BatchSize::Auto,
            optimizer: OptimizerKind::Adam,
            weight_decay: 1e-4,
            seed: 0,
            hidden_layers: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return param(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return param("epochs must be positive");
        }
        if self.batch_size == BatchSize::Rows(0) {
            return param("batch_size must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return param(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.hidden_layers > 2 {
            return param(format!("hidden_layers must be 0, 1 or 2, got {}", self.hidden_layers));
        }
        Ok(())
    }
}

pub(crate) struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub(crate) fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Adam => (vec![0.0; n_params], vec![0.0; n_params]),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Self { kind, lr, m, v, t: 0 }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - BETA1.powi(self.t);
                let c2 = 1.0 - BETA2.powi(self.t);
                for (((p, g), m), v) in
                    params.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut())
                {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Runs `config.epochs` passes, returning the mean batch loss of each epoch.
///
/// `loss_grad(batch, params, grad)` evaluates the objective on a batch
/// (`None` = every row), writing the gradient into `grad`.
pub(crate) fn train_loop<F>(
    n_rows: usize,
    params: &mut [f64],
    config: &TrainConfig,
    mut loss_grad: F,
) -> Result<Vec<f64>>
where
    F: FnMut(Option<&[usize]>, &[f64], &mut [f64]) -> f64,
{
    config.validate()?;
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.len());
    let mut grad = vec![0.0; params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_7a1e);
    let batch = config.batch_size.resolve(n_rows);
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = match batch {
            None => {
                let l = loss_grad(None, params, &mut grad);
                check_finite(l, epoch)?;
                opt.step(params, &grad);
                l
            }
            Some(b) => {
                order.shuffle(&mut rng);
                let mut total = 0.0;
                let mut count = 0usize;
                for chunk in order.chunks(b) {
                    let l = loss_grad(Some(chunk), params, &mut grad);
                    check_finite(l, epoch)?;
                    opt.step(params, &grad);
                    total += l * chunk.len() as f64;
                    count += chunk.len();
                }
                total / count as f64
            }
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        history.push(loss);
    }
    Ok(history)
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, loss })
    }
}

/// Sum of squares, for ridge penalties.
pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_size_resolution() {
        assert_eq!(BatchSize::Auto.resolve(50_000), None);
        assert_eq!(BatchSize::Auto.resolve(50_001), Some(4096));
        assert_eq!(BatchSize::Rows(10).resolve(5), None);
        assert_eq!(BatchSize::Rows(10).resolve(50), Some(10));
        assert_eq!(BatchSize::Full.resolve(1 << 20), None);
    }

    #[test]
    fn batch_size_serde() {
        assert_eq!(serde_json::from_str::<BatchSize>("\"full\"").unwrap(), BatchSize::Full);
        assert_eq!(serde_json::from_str::<BatchSize>("128").unwrap(), BatchSize::Rows(128));
        assert_eq!(serde_json::to_string(&BatchSize::Rows(7)).unwrap(), "7");
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut p = vec![3.0, -2.0];
        let cfg = TrainConfig { epochs: 2000, learning_rate: 0.05, weight_decay: 0.0, ..Default::default() };
        let hist = train_loop(1, &mut p, &cfg, |_, w, g| {
            g[0] = 2.0 * (w[0] - 1.0);
            g[1] = 2.0 * (w[1] + 0.5);
            (w[0] - 1.0).powi(2) + (w[1] + 0.5).powi(2)
        })
        .unwrap();
        assert!(hist.last().unwrap() < &1e-6);
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn divergence_names_epoch() {
        let mut p = vec![1.0];
        let cfg = TrainConfig { epochs: 10, optimizer: OptimizerKind::Sgd, learning_rate: 1.0, ..Default::default() };
        let err = train_loop(1, &mut p, &cfg, |_, w, g| {
            g[0] = 1e308 * w[0].signum();
            if w[0].abs() > 1e300 { f64::INFINITY } else { w[0] }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }), "{err:?}");
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: BatchSize::Rows(0), ..Default::default() },
            TrainConfig { weight_decay: -1.0, ..Default::default() },
            TrainConfig { hidden_layers: 3, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        }
    }
}
