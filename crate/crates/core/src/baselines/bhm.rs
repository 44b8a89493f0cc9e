//! Bayesian Hilbert map: Gaussian posterior over weights via the local
//! variational (Jaakkola-Jordan) bound on the logistic likelihood.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn};

use super::hm::{sigmoid, softplus};
use crate::error::{input, param, Error, Result};
use crate::geometry::{rbf_features, FeatureMatrix, HingeSet, Points};
use crate::kernels::FlushSubnormals;
use crate::sampling::{LabeledDataset, OCCUPIED};

/// Default prior variance of every weight.
pub const DEFAULT_PRIOR_VARIANCE: f64 = 10.0;

/// Relative bound improvement below which iteration stops early.
pub const BOUND_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BhmPrior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl BhmPrior {
    /// `N(0, variance * I)` over `width` weights.
    pub fn isotropic(width: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return param(format!("prior variance must be positive, got {variance}"));
        }
        Ok(Self { mean: DVector::zeros(width), covariance: DMatrix::identity(width, width) * variance })
    }

    pub fn default_for(hinges: &HingeSet) -> Self {
        Self::isotropic(hinges.feature_width(), DEFAULT_PRIOR_VARIANCE).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BhmModel {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    pub hinges: HingeSet,
    /// Evidence lower bound after each posterior update.
    pub bound_history: Vec<f64>,
}

/// `tanh(xi/2) / (4 xi)`, with its limit 1/8 at zero.
pub(crate) fn lambda(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi < 1e-6 {
        0.125 - xi * xi / 192.0
    } else {
        (0.5 * xi).tanh() / (4.0 * xi)
    }
}

/// `log sigmoid(x)`.
fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

fn cholesky(m: DMatrix<f64>, iteration: usize, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Numerical { iteration, message: format!("{what} is not positive definite") })
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Fits the posterior on binary free/occupied data, running at most `iters` updates.
pub fn fit_bhm(train: &LabeledDataset, hinges: &HingeSet, prior: &BhmPrior, iters: usize) -> Result<BhmModel> {
    if train.num_known_classes != 2 || train.labels.iter().any(|&l| l > 2) {
        return input("a Bayesian Hilbert map needs binary labels 1/2");
    }
    let features = if train.is_empty() {
        FeatureMatrix::from_vec(0, hinges.feature_width(), Vec::new())?
    } else {
        rbf_features(&train.points, hinges)?
    };
    let targets: Vec<f64> = train.labels.iter().map(|&l| if l == OCCUPIED { 1.0 } else { 0.0 }).collect();
    fit_bhm_features(&features, &targets, hinges, prior, iters)
}

pub fn fit_bhm_features(
    features: &FeatureMatrix,
    targets: &[f64],
    hinges: &HingeSet,
    prior: &BhmPrior,
    iters: usize,
) -> Result<BhmModel> {
    let w = hinges.feature_width();
    if prior.mean.len() != w || prior.covariance.shape() != (w, w) {
        return input(format!("prior must have {w} dimensions"));
    }
    if features.cols() != w || features.rows() != targets.len() {
        return input("feature matrix does not match targets or hinges");
    }
    let _ftz = FlushSubnormals::new();
    let prior_chol = cholesky(prior.covariance.clone(), 0, "prior covariance")?;
    let mut model = BhmModel {
        mean: prior.mean.clone(),
        covariance: prior.covariance.clone(),
        prior_mean: prior.mean.clone(),
        prior_cov: prior.covariance.clone(),
        hinges: hinges.clone(),
        bound_history: Vec::new(),
    };
    let n = features.rows();
    if n == 0 {
        return Ok(model);
    }
    if iters == 0 {
        return param("BHM needs at least one iteration");
    }
    let prior_prec = prior_chol.inverse();
    let prior_term = &prior_prec * &prior.mean;
    let prior_quad = prior.mean.dot(&prior_term);
    let prior_logdet = log_det(&prior_chol);

    // phi_t: w x n, one sample per column; phi: n x w.
    let phi_t = DMatrixView::from_slice(features.as_slice(), w, n);
    let phi = phi_t.transpose();
    let resid = DVector::from_iterator(n, targets.iter().map(|t| t - 0.5));
    let rhs = &prior_term + phi.tr_mul(&resid);

    // Variational parameters from the prior predictive second moment.
    let prior_prec_chol = cholesky(prior_prec.clone(), 0, "prior precision")?;
    let mut xi = second_moments(&phi_t, &prior_prec_chol, &prior.mean);
    let mut scaled = phi.clone();
    let mut last_chol = None;
    for it in 0..iters {
        let lam: Vec<f64> = xi.iter().map(|&x| lambda(x)).collect();
        let root: Vec<f64> = lam.iter().map(|l| (2.0 * l).sqrt()).collect();
        for (mut dst, src) in scaled.column_iter_mut().zip(phi.column_iter()) {
            for ((d, s), r) in dst.iter_mut().zip(src.iter()).zip(&root) {
                *d = s * r;
            }
        }
        let mut prec = scaled.tr_mul(&scaled);
        prec += &prior_prec;
        let chol = cholesky(prec, it + 1, "posterior precision")?;
        let mu = chol.solve(&rhs);

        let quad = mu.dot(&rhs);
        let mut bound = 0.5 * (-log_det(&chol) - prior_logdet) + 0.5 * quad - 0.5 * prior_quad;
        for (&x, &l) in xi.iter().zip(&lam) {
            bound += log_sigmoid(x) - 0.5 * x + l * x * x;
        }
        if !bound.is_finite() {
            return Err(Error::Numerical { iteration: it + 1, message: "variational bound is not finite".into() });
        }
        let prev = model.bound_history.last().copied();
        model.bound_history.push(bound);
        model.mean = mu;
        xi = second_moments(&phi_t, &chol, &model.mean);
        last_chol = Some(chol);
        if let Some(p) = prev {
            if bound - p <= BOUND_TOLERANCE * bound.abs().max(1.0) {
                break;
            }
        }
    }
    let chol = last_chol.expect("at least one iteration ran");
    let cov = chol.inverse();
    model.covariance = (&cov + cov.transpose()) * 0.5;
    Ok(model)
}

/// `sqrt(phi_i^T (S + m m^T) phi_i)` per sample, where `chol` factors the precision `S^-1`.
fn second_moments(phi_t: &DMatrixView<'_, f64>, chol: &Cholesky<f64, Dyn>, mean: &DVector<f64>) -> Vec<f64> {
    let n = phi_t.ncols();
    let l = chol.l();
    let m = phi_t.tr_mul(mean);
    let v = l.solve_lower_triangular(&phi_t.clone_owned()).expect("Cholesky factor is invertible");
    (0..n).map(|i| (v.column(i).norm_squared() + m[i] * m[i]).sqrt()).collect()
}

impl BhmModel {
    /// Predictive mean (moderated sigmoid) and variance `phi^T Sigma phi`.
    pub fn predict_features(&self, features: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        if features.cols() != self.mean.len() {
            return input("feature width does not match model");
        }
        let _ftz = FlushSubnormals::new();
        let mut means = Vec::with_capacity(features.rows());
        let mut vars = Vec::with_capacity(features.rows());
        let mut sphi = DVector::zeros(self.mean.len());
        for r in features.iter_rows() {
            let phi = DVector::from_column_slice(r);
            let a = self.mean.dot(&phi);
            sphi.gemv(1.0, &self.covariance, &phi, 0.0);
            let v = phi.dot(&sphi).max(0.0);
            means.push(sigmoid(a / (1.0 + std::f64::consts::PI * v / 8.0).sqrt()));
            vars.push(v);
        }
        Ok((means, vars))
    }
}

/// Per-query (mean occupancy probability, predictive variance).
pub fn bhm_predict(model: &BhmModel, queries: &Points) -> Result<(Vec<f64>, Vec<f64>)> {
    if queries.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let f = rbf_features(queries, &model.hinges)?;
    model.predict_features(&f)
}
