//! The (C+1)-class softmax map.
//!
//! Known classes `1..=C` plus one extra "uncertain" output trained on
//! contrastive noise. With no hidden layers the logits are a single
//! `(C+1) x (H+1)` weight matrix applied to the RBF features; one or two
//! ReLU layers of width `round(H/4)` may be stacked in between.

use nalgebra::{DMatrix, DMatrixView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{input, param, Error, Result};
use crate::kernels::{softmax_nll_grad, Rows};
use crate::geometry::{rbf_features, FeatureMatrix, HingeSet, Points};
use crate::optim::{sq_norm, train_loop, TrainConfig};
use crate::sampling::LabeledDataset;

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// Shape of one dense layer: `rows` outputs, `cols` inputs (bias included).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trained softmax map bound to its hinge set.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxMapModel {
    hinges: HingeSet,
    shapes: Vec<LayerShape>,
    /// Row-major layer weights, concatenated in layer order.
    params: Vec<f64>,
    class_names: Vec<String>,
}

/// Per-query class probabilities, `num_classes` per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    num_classes: usize,
    probs: Vec<f64>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.probs.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.probs.chunks_exact(self.num_classes)
    }

    /// Column for a 1-based label.
    pub fn channel(&self, label: u32) -> Vec<f64> {
        let c = label as usize - 1;
        self.rows().map(|r| r[c]).collect()
    }

    /// Probability of the last ("uncertain") class per row.
    pub fn uncertainty(&self) -> Vec<f64> {
        self.rows().map(|r| r[self.num_classes - 1]).collect()
    }

    /// 1-based argmax restricted to the known classes.
    pub fn argmax_known(&self) -> Vec<u32> {
        self.rows()
            .map(|r| {
                let known = &r[..self.num_classes - 1];
                let mut best = 0;
                for (c, &p) in known.iter().enumerate() {
                    if p > known[best] {
                        best = c;
                    }
                }
                best as u32 + 1
            })
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Width of each hidden layer for `h` hinges.
pub fn hidden_width(h: usize) -> usize {
    ((h as f64 / 4.0).round() as usize).max(1)
}

impl SoftmaxMapModel {
    /// All-zero model with `num_known_classes + 1` outputs and no hidden layer.
    pub fn zeros(hinges: HingeSet, num_known_classes: u32) -> Result<Self> {
        Self::initialise(hinges, num_known_classes, 0, 0)
    }

    /// Hidden layers get He-normal weights from `seed`; the output layer starts at zero.
    pub fn initialise(
        hinges: HingeSet,
        num_known_classes: u32,
        hidden_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_known_classes < 1 {
            return param("a softmax map needs at least one known class");
        }
        if hidden_layers > 2 {
            return param(format!("hidden_layers must be 0, 1 or 2, got {hidden_layers}"));
        }
        let k = num_known_classes as usize + 1;
        let width = hidden_width(hinges.len());
        let mut shapes = Vec::new();
        let mut cols = hinges.feature_width();
        for _ in 0..hidden_layers {
            shapes.push(LayerShape { rows: width, cols });
            cols = width + 1;
        }
        shapes.push(LayerShape { rows: k, cols });
        let mut params = vec![0.0; shapes.iter().map(LayerShape::len).sum()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for s in &shapes[..hidden_layers] {
            let std = (2.0 / s.cols as f64).sqrt();
            for w in &mut params[off..off + s.len()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = std * z;
            }
            off += s.len();
        }
        let class_names = default_class_names(num_known_classes);
        Ok(Self { hinges, shapes, params, class_names })
    }

    /// Rebuilds a model from stored parts, validating every shape.
    pub fn from_parts(
        hinges: HingeSet,
        shapes: Vec<LayerShape>,
        params: Vec<f64>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if shapes.is_empty() || shapes.len() > 3 {
            return input(format!("expected 1 to 3 layers, got {}", shapes.len()));
        }
        let mut cols = hinges.feature_width();
        for (l, s) in shapes.iter().enumerate() {
            if s.cols != cols {
                return input(format!("layer {l} expects {} inputs, found {}", cols, s.cols));
            }
            cols = s.rows + 1;
        }
        let k = shapes.last().unwrap().rows;
        if k < 2 {
            return input("the output layer needs at least one known class plus the uncertain class");
        }
        if class_names.len() != k {
            return input(format!("{} class names for {k} outputs", class_names.len()));
        }
        let total: usize = shapes.iter().map(LayerShape::len).sum();
        if params.len() != total {
            return input(format!("{} weights stored, shapes need {total}", params.len()));
        }
        if params.iter().any(|w| !w.is_finite()) {
            return input("model weights must be finite");
        }
        Ok(Self { hinges, shapes, params, class_names })
    }

    pub fn hinges(&self) -> &HingeSet {
        &self.hinges
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn set_class_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.num_outputs() {
            return input(format!("{} names for {} outputs", names.len(), self.num_outputs()));
        }
        self.class_names = names;
        Ok(())
    }

    pub fn hidden_layers(&self) -> usize {
        self.shapes.len() - 1
    }

    /// C + 1.
    pub fn num_outputs(&self) -> usize {
        self.shapes.last().unwrap().rows
    }

    /// C.
    pub fn num_known_classes(&self) -> u32 {
        self.num_outputs() as u32 - 1
    }

    pub fn input_width(&self) -> usize {
        self.shapes[0].cols
    }

    /// Output-layer weight matrix, row-major `(C+1) x cols`.
    pub fn output_weights(&self) -> &[f64] {
        let s = self.shapes.last().unwrap();
        &self.params[self.params.len() - s.len()..]
    }

    fn layer(&self, l: usize) -> &[f64] {
        let off: usize = self.shapes[..l].iter().map(LayerShape::len).sum();
        &self.params[off..off + self.shapes[l].len()]
    }

    /// Logits of a single feature row.
    fn logits_into(&self, features: &[f64], scratch: &mut Vec<f64>, next: &mut Vec<f64>, out: &mut [f64]) {
        scratch.clear();
        scratch.extend_from_slice(features);
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let w = self.layer(l);
            next.clear();
            for r in 0..s.rows {
                let row = &w[r * s.cols..(r + 1) * s.cols];
                let z: f64 = row.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
                next.push(if l == last { z } else { z.max(0.0) });
            }
            if l == last {
                out.copy_from_slice(next);
            } else {
                next.push(1.0);
                std::mem::swap(scratch, next);
            }
        }
    }
}

fn default_class_names(c: u32) -> Vec<String> {
    let mut names: Vec<String> = (1..=c).map(|i| format!("class_{i}")).collect();
    names.push("uncertain".to_string());
    names
}

/// Stable softmax of one row in place.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Class probabilities for precomputed feature rows.
pub fn softmax_forward(model: &SoftmaxMapModel, features: &FeatureMatrix) -> Result<Prediction> {
    if features.cols() != model.input_width() {
        return input(format!(
            "feature width {} does not match model input width {}",
            features.cols(),
            model.input_width()
        ));
    }
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return input("features must be finite");
    }
    let k = model.num_outputs();
    let mut probs = vec![0.0; features.rows() * k];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (row, out) in features.iter_rows().zip(probs.chunks_exact_mut(k)) {
        model.logits_into(row, &mut a, &mut b, out);
        softmax_in_place(out);
    }
    Ok(Prediction { num_classes: k, probs })
}

/// Features then softmax for raw coordinates.
pub fn predict(model: &SoftmaxMapModel, queries: &Points) -> Result<Prediction> {
    if queries.is_empty() {
        return Ok(Prediction { num_classes: model.num_outputs(), probs: Vec::new() });
    }
    let f = rbf_features(queries, model.hinges())?;
    softmax_forward(model, &f)
}

/// Renormalised occupancy `p_occ / (p_occ + p_free)` from one prediction row.
pub fn occupancy_probability(probs: &[f64], occupied: u32, free: u32) -> f64 {
    let po = probs[occupied as usize - 1];
    let pf = probs[free as usize - 1];
    let s = po + pf;
    if s > 0.0 {
        po / s
    } else {
        0.5
    }
}

/// Probability of "not free" among the known classes of one row.
pub fn occupancy_from_free(probs: &[f64], free: u32, num_known: u32) -> f64 {
    let known = &probs[..num_known as usize];
    let total: f64 = known.iter().sum();
    let occ = total - known[free as usize - 1];
    if total > 0.0 {
        (occ / total).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Layers with at most this many outputs accumulate their weight gradient sample by sample.
const SAMPLEWISE_GRAD_ROWS: usize = 8;

fn check_labels(labels: &[u32], k: usize) -> Result<()> {
    if let Some(&l) = labels.iter().find(|&&l| l == 0 || l as usize > k) {
        return input(format!("label {l} outside 1..={k}"));
    }
    Ok(())
}

/// Batched forward/backward over a feature view.
///
/// `phi_t` is the transposed feature batch (`in x n`, samples as columns).
/// Returns the mean NLL (no ridge term); writes the NLL gradient into `grad`.
fn batch_loss_grad(
    shapes: &[LayerShape],
    params: &[f64],
    phi_t: DMatrixView<'_, f64>,
    labels: &[u32],
    grad: &mut [f64],
) -> f64 {
    let n = phi_t.ncols();
    let nl = shapes.len();
    let mut offsets = Vec::with_capacity(nl);
    let mut off = 0;
    for s in shapes {
        offsets.push(off);
        off += s.len();
    }
    let wt = |l: usize| DMatrixView::from_slice(&params[offsets[l]..offsets[l] + shapes[l].len()], shapes[l].cols, shapes[l].rows);

    // Hidden activations with a trailing row of ones.
    let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(nl - 1);
    let mut pre: Vec<DMatrix<f64>> = Vec::with_capacity(nl - 1);
    for l in 0..nl - 1 {
        let z = {
            let input = if l == 0 { phi_t } else { acts[l - 1].as_view() };
            wt(l).tr_mul(&input)
        };
        let mut a = DMatrix::<f64>::from_element(shapes[l].rows + 1, n, 1.0);
        a.view_mut((0, 0), (shapes[l].rows, n)).copy_from(&z.map(|v| v.max(0.0)));
        pre.push(z);
        acts.push(a);
    }
    let last_in = if nl == 1 { phi_t } else { acts[nl - 2].as_view() };
    let mut delta = wt(nl - 1).tr_mul(&last_in);
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    for (j, mut col) in delta.column_iter_mut().enumerate() {
        let z = col.as_mut_slice();
        softmax_in_place(z);
        let y = labels[j] as usize - 1;
        loss -= z[y].max(PROB_FLOOR).ln();
        z[y] -= 1.0;
        for v in z.iter_mut() {
            *v *= inv_n;
        }
    }
    loss *= inv_n;

    for l in (0..nl).rev() {
        let s = shapes[l];
        let input = if l == 0 { phi_t } else { acts[l - 1].as_view() };
        {
            let g = &mut grad[offsets[l]..offsets[l] + s.len()];
            let mut gm = nalgebra::DMatrixViewMut::from_slice(g, s.cols, s.rows);
            if s.rows <= SAMPLEWISE_GRAD_ROWS {
                // Few outputs: accumulate per sample so each input column is read once, unpacked.
                gm.fill(0.0);
                for (j, col) in input.column_iter().enumerate() {
                    for k in 0..s.rows {
                        let d = delta[(k, j)];
                        if d != 0.0 {
                            gm.column_mut(k).axpy(d, &col, 1.0);
                        }
                    }
                }
            } else {
                gm.gemm(1.0, &input, &delta.transpose(), 0.0);
            }
        }
        if l > 0 {
            let w = wt(l);
            let back = w.rows(0, s.cols - 1) * &delta;
            let mask = &pre[l - 1];
            delta = back.zip_map(mask, |g, z| if z > 0.0 { g } else { 0.0 });
        }
    }
    loss
}

/// Mean negative log-likelihood plus `(weight_decay/2) * ||params||^2`, and its exact gradient.
///
/// The gradient has the same layout as [`SoftmaxMapModel::params`].
pub fn loss_and_grad(
    model: &SoftmaxMapModel,
    features: &FeatureMatrix,
    labels: &[u32],
    weight_decay: f64,
) -> Result<(f64, Vec<f64>)> {
    if features.cols() != model.input_width() {
        return input("feature width does not match model input width");
    }
    if labels.len() != features.rows() {
        return input(format!("{} labels for {} feature rows", labels.len(), features.rows()));
    }
    if labels.is_empty() {
        return input("loss of an empty batch is undefined");
    }
    check_labels(labels, model.num_outputs())?;
    let mut grad = vec![0.0; model.params.len()];
    let nll = if model.shapes.len() == 1 {
        let k = model.num_outputs();
        softmax_nll_grad(features.as_slice(), features.cols(), Rows::All(features.rows()), labels, &model.params, k, &mut grad)
    } else {
        let phi_t = DMatrixView::from_slice(features.as_slice(), features.cols(), features.rows());
        batch_loss_grad(&model.shapes, &model.params, phi_t, labels, &mut grad)
    };
    for (g, w) in grad.iter_mut().zip(&model.params) {
        *g += weight_decay * w;
    }
    Ok((nll + 0.5 * weight_decay * sq_norm(&model.params), grad))
}

/// A model together with its per-epoch training loss.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub loss_history: Vec<f64>,
}

/// Trains a softmax map on precomputed features.
pub fn fit_features(
    features: &FeatureMatrix,
    labels: &[u32],
    hinges: &HingeSet,
    num_known_classes: u32,
    config: &TrainConfig,
) -> Result<Trained<SoftmaxMapModel>> {
    config.validate()?;
    if labels.is_empty() {
        return input("cannot train on an empty dataset");
    }
    let mut model = SoftmaxMapModel::initialise(
        hinges.clone(),
        num_known_classes,
        config.hidden_layers,
        config.seed,
    )?;
    check_labels(labels, model.num_outputs())?;
    if features.rows() != labels.len() || features.cols() != model.input_width() {
        return input("feature matrix does not match labels or hinges");
    }
    let shapes = model.shapes.clone();
    let wd = config.weight_decay;
    let mut batch_buf: Vec<f64> = Vec::new();
    let mut batch_labels: Vec<u32> = Vec::new();
    let k = model.num_outputs();
    let loss_history = train_loop(labels.len(), &mut model.params, config, |batch, w, g| {
        let nll = match batch {
            None if shapes.len() == 1 => {
                softmax_nll_grad(features.as_slice(), features.cols(), Rows::All(features.rows()), labels, w, k, g)
            }
            Some(idx) if shapes.len() == 1 => {
                softmax_nll_grad(features.as_slice(), features.cols(), Rows::Subset(idx), labels, w, k, g)
            }
            None => {
                let phi_t = DMatrixView::from_slice(features.as_slice(), features.cols(), features.rows());
                batch_loss_grad(&shapes, w, phi_t, labels, g)
            }
            Some(idx) => {
                batch_buf.clear();
                batch_labels.clear();
                for &i in idx {
                    batch_buf.extend_from_slice(features.row(i));
                    batch_labels.push(labels[i]);
                }
                let phi_t = DMatrixView::from_slice(&batch_buf, features.cols(), idx.len());
                batch_loss_grad(&shapes, w, phi_t, &batch_labels, g)
            }
        };
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += wd * wi;
        }
        nll + 0.5 * wd * sq_norm(w)
    })?;
    Ok(Trained { model, loss_history })
}

/// Trains a softmax map on a (typically noise-augmented) dataset.
pub fn fit(train: &LabeledDataset, hinges: &HingeSet, config: &TrainConfig) -> Result<Trained<SoftmaxMapModel>> {
    if train.is_empty() {
        return input("cannot train on an empty dataset");
    }
    let features = rbf_features(&train.points, hinges)?;
    fit_features(&features, &train.labels, hinges, train.num_known_classes, config)
}

/// Estimates a local Lipschitz constant of the gradient by backtracking.
///
/// Starting from `initial`, doubles `L` until the step `w - g/L` achieves the
/// sufficient-decrease condition `f(w') <= f(w) - ||g||^2 / (2L)`.
pub fn backtracking_lipschitz(
    model: &SoftmaxMapModel,
    features: &FeatureMatrix,
    labels: &[u32],
    weight_decay: f64,
    initial: f64,
) -> Result<f64> {
    Ok(backtrack_step(model, features, labels, weight_decay, initial)?.2)
}

fn backtrack_step(
    model: &SoftmaxMapModel,
    features: &FeatureMatrix,
    labels: &[u32],
    weight_decay: f64,
    initial: f64,
) -> Result<(SoftmaxMapModel, f64, f64)> {
    if !(initial > 0.0 && initial.is_finite()) {
        return param("initial Lipschitz estimate must be positive");
    }
    let (f0, g) = loss_and_grad(model, features, labels, weight_decay)?;
    let gg = sq_norm(&g);
    let mut l = initial;
    let mut trial = model.clone();
    for _ in 0..200 {
        for ((t, w), gi) in trial.params.iter_mut().zip(&model.params).zip(&g) {
            *t = w - gi / l;
        }
        let (f1, _) = loss_and_grad(&trial, features, labels, weight_decay)?;
        if f1 <= f0 - gg / (2.0 * l) {
            return Ok((trial, f1, l));
        }
        l *= 2.0;
    }
    Err(Error::Numerical { iteration: 200, message: "backtracking did not terminate".into() })
}

/// Full-batch gradient descent with step `1/L`, `L` re-estimated by backtracking.
///
/// `L` never decreases between iterations. Returns the final model, the loss
/// before each step plus the final loss, and the last `L`.
pub fn descend_with_backtracking(
    model: &SoftmaxMapModel,
    features: &FeatureMatrix,
    labels: &[u32],
    weight_decay: f64,
    iterations: usize,
    initial: f64,
) -> Result<(SoftmaxMapModel, Vec<f64>, f64)> {
    let mut current = model.clone();
    let mut history = vec![loss_and_grad(&current, features, labels, weight_decay)?.0];
    let mut l = initial;
    for _ in 0..iterations {
        let (next, f, used) = backtrack_step(&current, features, labels, weight_decay, l)?;
        current = next;
        l = used;
        history.push(f);
    }
    Ok((current, history, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Points;
    use crate::optim::{BatchSize, OptimizerKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn hinges2(rows: &[[f64; 2]], gamma: f64) -> HingeSet {
        HingeSet::new(Points::from_rows(2, rows).unwrap(), gamma).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, h: usize, c: u32, hidden: usize) -> SoftmaxMapModel {
        let rows: Vec<[f64; 2]> = (0..h).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let mut m = SoftmaxMapModel::initialise(hinges2(&rows, 0.8), c, hidden, rng.random()).unwrap();
        for w in m.params_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn zero_weights_are_uniform() {
        let m = SoftmaxMapModel::zeros(hinges2(&[[0.0, 0.0], [1.0, 1.0]], 1.0), 2).unwrap();
        let p = predict(&m, &Points::from_rows(2, &[[0.3, -4.0]]).unwrap()).unwrap();
        for &v in p.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_softmax() {
        let mut z = [std::f64::consts::LN_2, 0.0, 0.0];
        softmax_in_place(&mut z);
        assert!((z[0] - 0.5).abs() < 1e-15);
        assert!((z[1] - 0.25).abs() < 1e-15);
        assert!((z[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_ratio_oracle() {
        // Independent route: p_c = 1 / sum_k exp(z_k - z_c).
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let c = rng.random_range(1..5);
            let m = random_model(&mut rng, 6, c, 0);
            let q = Points::from_rows(2, &[[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]]).unwrap();
            let f = rbf_features(&q, m.hinges()).unwrap();
            let p = softmax_forward(&m, &f).unwrap();
            let w = m.output_weights();
            let cols = m.input_width();
            let z: Vec<f64> = (0..m.num_outputs())
                .map(|c| (0..cols).map(|j| w[c * cols + j] * f.row(0)[j]).sum())
                .collect();
            for c in 0..z.len() {
                let mut terms: Vec<f64> = z.iter().map(|zk| (zk - z[c]).exp()).collect();
                terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let want = 1.0 / terms.iter().sum::<f64>();
                assert!((p.row(0)[c] - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_non_finite_and_width_mismatch() {
        let m = SoftmaxMapModel::zeros(hinges2(&[[0.0, 0.0]], 1.0), 2).unwrap();
        let bad = FeatureMatrix::from_vec(1, 2, vec![f64::NAN, 1.0]).unwrap();
        assert!(matches!(softmax_forward(&m, &bad), Err(Error::Input(_))));
        let wide = FeatureMatrix::from_vec(1, 3, vec![0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(softmax_forward(&m, &wide), Err(Error::Input(_))));
    }

    #[test]
    fn zero_weight_loss_is_log_k() {
        let m = SoftmaxMapModel::zeros(hinges2(&[[0.0, 0.0], [1.0, 0.0]], 1.0), 2).unwrap();
        let q = Points::from_rows(2, &[[0.1, 0.2], [3.0, 1.0], [0.0, 0.0]]).unwrap();
        let f = rbf_features(&q, m.hinges()).unwrap();
        let (l, _) = loss_and_grad(&m, &f, &[1, 3, 2], 0.0).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn single_sample_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model(&mut rng, 4, 2, 0);
        let q = Points::from_rows(2, &[[0.5, -0.5]]).unwrap();
        let f = rbf_features(&q, m.hinges()).unwrap();
        let y = 2u32;
        let (_, g) = loss_and_grad(&m, &f, &[y], 0.0).unwrap();
        let p = softmax_forward(&m, &f).unwrap();
        let cols = m.input_width();
        for c in 0..3 {
            let coef = p.row(0)[c] - if c + 1 == y as usize { 1.0 } else { 0.0 };
            for j in 0..cols {
                assert!((g[c * cols + j] - coef * f.row(0)[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for inst in 0..20 {
            let hidden = inst % 3;
            let c = rng.random_range(1..4);
            let m = random_model(&mut rng, 5, c, hidden);
            let n = 12;
            let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..=c + 1)).collect();
            let f = rbf_features(&Points::from_rows(2, &rows).unwrap(), m.hinges()).unwrap();
            let wd = 1e-3;
            let (_, g) = loss_and_grad(&m, &f, &labels, wd).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..m.params().len() {
                let mut plus = m.clone();
                plus.params_mut()[i] += h;
                let mut minus = m.clone();
                minus.params_mut()[i] -= h;
                let fp = loss_and_grad(&plus, &f, &labels, wd).unwrap().0;
                let fm = loss_and_grad(&minus, &f, &labels, wd).unwrap().0;
                let num = (fp - fm) / (2.0 * h);
                let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-3);
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-5, "instance {inst} (hidden {hidden}): relative error {worst}");
        }
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let m = SoftmaxMapModel::zeros(hinges2(&[[0.0, 0.0]], 1.0), 2).unwrap();
        let f = rbf_features(&Points::from_rows(2, &[[0.0, 0.0]]).unwrap(), m.hinges()).unwrap();
        assert!(matches!(loss_and_grad(&m, &f, &[4], 0.0), Err(Error::Input(_))));
        assert!(matches!(loss_and_grad(&m, &f, &[0], 0.0), Err(Error::Input(_))));
    }

    fn two_points() -> LabeledDataset {
        LabeledDataset::new(Points::from_rows(2, &[[0.0, 0.0], [3.0, 0.0]]).unwrap(), vec![1, 2], 2).unwrap()
    }

    #[test]
    fn separates_two_points_with_monotone_loss() {
        let data = two_points();
        let h = hinges2(&[[0.0, 0.0], [3.0, 0.0]], 1.0);
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            epochs: 200,
            batch_size: BatchSize::Full,
            ..Default::default()
        };
        let t = fit(&data, &h, &cfg).unwrap();
        assert!(t.loss_history.windows(2).all(|w| w[1] < w[0]));
        let p = predict(&t.model, &data.points).unwrap();
        assert_eq!(p.argmax_known(), vec![1, 2]);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<[f64; 2]> = (0..300).map(|_| [rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)]).collect();
        let labels: Vec<u32> = rows.iter().map(|r| if r[0] + r[1] > 4.0 { 2 } else { 1 }).collect();
        let data = LabeledDataset::new(Points::from_rows(2, &rows).unwrap(), labels, 2).unwrap();
        let h = crate::geometry::grid_hinges(&data.bounds, 1.0, 0.5).unwrap();
        for hidden in [0, 1] {
            let cfg = TrainConfig { epochs: 30, batch_size: BatchSize::Rows(64), hidden_layers: hidden, seed: 3, ..Default::default() };
            let a = fit(&data, &h, &cfg).unwrap();
            let b = fit(&data, &h, &cfg).unwrap();
            let bits = |m: &SoftmaxMapModel| m.params().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.model), bits(&b.model));
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let h = hinges2(&[[0.0, 0.0]], 1.0);
        let f = FeatureMatrix::from_vec(0, 2, vec![]).unwrap();
        assert!(matches!(fit_features(&f, &[], &h, 2, &TrainConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = two_points();
        let h = hinges2(&[[0.0, 0.0], [3.0, 0.0]], 1.0);
        let cfg = TrainConfig { optimizer: OptimizerKind::Sgd, learning_rate: 1e300, epochs: 50, ..Default::default() };
        match fit(&data, &h, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn batch_prediction_matches_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(&mut rng, 10, 3, 1);
        let rows: Vec<[f64; 2]> = (0..20).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let q = Points::from_rows(2, &rows).unwrap();
        let all = predict(&m, &q).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let one = predict(&m, &Points::from_rows(2, &[*r]).unwrap()).unwrap();
            assert_eq!(one.row(0), all.row(i));
        }
    }

    #[test]
    fn occupancy_readout() {
        assert!((occupancy_probability(&[0.3, 0.6, 0.1], 2, 1) - 0.6 / 0.9).abs() < 1e-15);
        assert_eq!(occupancy_probability(&[0.4, 0.6, 0.0], 2, 1), 0.6);
        assert_eq!(occupancy_probability(&[0.45, 0.45, 0.10], 2, 1), 0.5);
    }

    #[test]
    fn from_parts_validates_shapes() {
        let h = hinges2(&[[0.0, 0.0], [1.0, 0.0]], 1.0);
        let names = default_class_names(2);
        let ok = SoftmaxMapModel::from_parts(h.clone(), vec![LayerShape { rows: 3, cols: 3 }], vec![0.0; 9], names.clone());
        assert!(ok.is_ok());
        let bad = SoftmaxMapModel::from_parts(h, vec![LayerShape { rows: 3, cols: 4 }], vec![0.0; 12], names);
        assert!(matches!(bad, Err(Error::Input(_))));
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_and_shift_invariant(z in prop::collection::vec(-50.0f64..50.0, 2..8), shift in -100.0f64..100.0) {
            let mut a = z.clone();
            softmax_in_place(&mut a);
            let s: f64 = a.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
            prop_assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
            let mut b: Vec<f64> = z.iter().map(|v| v + shift).collect();
            softmax_in_place(&mut b);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn gradient_descent_with_backtracked_step_is_monotone(
            seed in 0u64..10_000,
            n in 4usize..30,
            c in 1u32..4,
            hidden in 0usize..3,
            wd in 1e-4f64..1e-1,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..=c + 1)).collect();
            let hrows: Vec<[f64; 2]> = (0..6).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let h = hinges2(&hrows, 1.0);
            let f = rbf_features(&Points::from_rows(2, &rows).unwrap(), &h).unwrap();
            let m0 = SoftmaxMapModel::initialise(h, c, hidden, seed).unwrap();
            let (_, hist, _) = descend_with_backtracking(&m0, &f, &labels, wd, 200, 1e-3).unwrap();
            prop_assert_eq!(hist.len(), 201);
            for w in hist.windows(2) {
                prop_assert!(w[1] <= w[0], "loss rose {} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn label_permutation_permutes_weight_rows(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..=4)).collect();
            let perm = [3u32, 1, 4, 2]; // label l becomes perm[l-1]
            let permuted: Vec<u32> = labels.iter().map(|&l| perm[l as usize - 1]).collect();
            let h = hinges2(&[[0.0, 0.0], [1.0, 1.0], [-1.0, 0.5]], 1.0);
            let f = rbf_features(&Points::from_rows(2, &rows).unwrap(), &h).unwrap();
            let cfg = TrainConfig { epochs: 40, batch_size: BatchSize::Full, ..Default::default() };
            let a = fit_features(&f, &labels, &h, 3, &cfg).unwrap().model;
            let b = fit_features(&f, &permuted, &h, 3, &cfg).unwrap().model;
            let cols = a.input_width();
            for c in 0..4 {
                let pc = perm[c] as usize - 1;
                for j in 0..cols {
                    let wa = a.output_weights()[c * cols + j];
                    let wb = b.output_weights()[pc * cols + j];
                    prop_assert!((wa - wb).abs() <= 1e-12);
                }
            }
        }
    }
}
