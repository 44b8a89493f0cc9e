//! AUC, IoU, Chamfer distance, distance-to-data and rank correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::geometry::{distance, Points};

fn metric<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Metric(msg.into()))
}

/// 1-based average ranks (ties share the mean of their positions).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // Positions i+1 ..= j share their mean.
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Area under the ROC curve by the rank-sum statistic; ties count one half.
pub fn compute_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return metric(format!("{} scores for {} labels", scores.len(), positive.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return metric("AUC scores must not be NaN");
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return metric("AUC needs both positive and negative labels");
    }
    let ranks = average_ranks(scores);
    // Twice the rank sum keeps every tie-rank an exact integer.
    let twice: u128 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| (2.0 * r) as u128).sum();
    let np = n_pos as u128;
    let twice_u = twice - np * (np + 1);
    Ok(snap_ratio(twice_u, 2 * np * n_neg as u128))
}

/// `num / den` rounded half-to-even onto multiples of 2^-53, so `1 - x` stays exact.
fn snap_ratio(num: u128, den: u128) -> f64 {
    const SCALE: u128 = 1 << 53;
    let scaled = num * SCALE;
    let (mut q, r) = (scaled / den, scaled % den);
    if 2 * r > den || (2 * r == den && q % 2 == 1) {
        q += 1;
    }
    q as f64 / SCALE as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// IoU per class that appears in the prediction or the truth.
    pub per_class: BTreeMap<u32, f64>,
    /// Mean IoU over the classes present in the truth.
    pub miou: f64,
}

/// Per-class intersection over union; `classes` restricts which labels are scored.
pub fn compute_iou(pred: &[u32], truth: &[u32], classes: &[u32]) -> Result<IouReport> {
    if pred.len() != truth.len() {
        return metric(format!("{} predictions for {} labels", pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return metric("IoU of an empty label set is undefined");
    }
    let mut per_class = BTreeMap::new();
    let mut present = Vec::new();
    for &c in classes {
        let mut inter = 0usize;
        let mut union = 0usize;
        let mut in_truth = false;
        for (&p, &t) in pred.iter().zip(truth) {
            let (a, b) = (p == c, t == c);
            inter += (a && b) as usize;
            union += (a || b) as usize;
            in_truth |= b;
        }
        if union == 0 {
            continue;
        }
        let iou = inter as f64 / union as f64;
        per_class.insert(c, iou);
        if in_truth {
            present.push(iou);
        }
    }
    if present.is_empty() {
        return metric("none of the scored classes occurs in the ground truth");
    }
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    Ok(IouReport { per_class, miou })
}

/// Exact nearest-neighbour index over a uniform grid.
struct Grid<'a> {
    points: &'a Points,
    lo: Vec<f64>,
    cell: f64,
    dims: Vec<usize>,
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a Points) -> Self {
        let d = points.dim();
        let n = points.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points.iter() {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent: Vec<f64> = (0..d).map(|k| hi[k] - lo[k]).collect();
        let max_extent = extent.iter().copied().fold(0.0, f64::max);
        let target_cells = n.max(1) as f64;
        let vol: f64 = extent.iter().map(|e| e.max(max_extent * 1e-3).max(1e-12)).product();
        let mut cell = (vol / target_cells).powf(1.0 / d as f64);
        if !(cell > 0.0 && cell.is_finite()) {
            cell = 1.0;
        }
        let dims: Vec<usize> = extent.iter().map(|e| ((e / cell).floor() as usize + 1).min(1 << 20)).collect();
        let total: usize = dims.iter().product();
        let mut counts = vec![0usize; total + 1];
        let mut keys = Vec::with_capacity(n);
        let mut g = Self { points, lo, cell, dims, starts: Vec::new(), order: Vec::new() };
        for p in points.iter() {
            let key = g.flat(&g.coords(p));
            keys.push(key);
            counts[key + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; n];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        g.starts = counts;
        g.order = order;
        g
    }

    fn coords(&self, p: &[f64]) -> Vec<isize> {
        (0..p.len())
            .map(|k| (((p[k] - self.lo[k]) / self.cell).floor() as isize).clamp(0, self.dims[k] as isize - 1))
            .collect()
    }

    fn flat(&self, c: &[isize]) -> usize {
        let mut key = 0;
        for k in (0..c.len()).rev() {
            key = key * self.dims[k] + c[k] as usize;
        }
        key
    }

    fn nearest(&self, q: &[f64]) -> f64 {
        let d = q.len();
        let home = self.coords(q);
        // Distance from q to the grid's box; shells grow around the clamped home cell.
        let mut best = f64::INFINITY;
        let max_shell = self.dims.iter().copied().max().unwrap() as isize;
        let outside_sq: f64 = (0..d)
            .map(|k| {
                let a = self.lo[k];
                let b = self.lo[k] + self.dims[k] as f64 * self.cell;
                (a - q[k]).max(0.0).max(q[k] - b)
            })
            .map(|v| v * v)
            .sum();
        let mut c = vec![0isize; d];
        for shell in 0..=max_shell {
            self.visit_shell(&home, shell, 0, &mut c, &mut |key| {
                for &i in &self.order[self.starts[key]..self.starts[key + 1]] {
                    let dd = distance(q, self.points.get(i));
                    if dd < best {
                        best = dd;
                    }
                }
            });
            // Later shells lie at least `shell * cell` past the home cell on some axis.
            let reach = shell as f64 * self.cell;
            if best * best <= outside_sq + reach * reach {
                break;
            }
        }
        best
    }

    fn visit_shell(&self, home: &[isize], shell: isize, axis: usize, c: &mut Vec<isize>, f: &mut impl FnMut(usize)) {
        let d = home.len();
        if axis == d {
            if c.iter().zip(home).any(|(a, b)| (a - b).abs() == shell) || shell == 0 {
                f(self.flat(c));
            }
            return;
        }
        let lo = (home[axis] - shell).max(0);
        let hi = (home[axis] + shell).min(self.dims[axis] as isize - 1);
        for v in lo..=hi {
            c[axis] = v;
            self.visit_shell(home, shell, axis + 1, c, f);
        }
    }
}

fn mean_nearest(from: &Points, to: &Points) -> f64 {
    let grid = Grid::new(to);
    let total: f64 = from.iter().map(|q| grid.nearest(q)).sum();
    total / from.len() as f64
}

/// Symmetric mean nearest-neighbour distance between two point sets.
pub fn compute_chamfer(a: &Points, b: &Points) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return metric("Chamfer distance needs two non-empty point sets");
    }
    if a.dim() != b.dim() {
        return metric("Chamfer point sets differ in dimension");
    }
    Ok(0.5 * (mean_nearest(a, b) + mean_nearest(b, a)))
}

/// Mean Euclidean distance from `x` to the reference points.
pub fn distance_to_data(x: &[f64], reference: &Points) -> Result<f64> {
    if reference.is_empty() {
        return input("distance to data needs at least one reference point");
    }
    if x.len() != reference.dim() {
        return input("query dimension does not match reference points");
    }
    Ok(reference.iter().map(|r| distance(x, r)).sum::<f64>() / reference.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Correlation {
    Defined(f64),
    /// One of the variables is constant.
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Defined(v) => Some(v),
            Correlation::Undefined => None,
        }
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Correlation {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        Correlation::Undefined
    } else {
        Correlation::Defined((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return metric("Spearman inputs differ in length");
    }
    if x.len() < 2 {
        return metric("Spearman correlation needs at least two pairs");
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return metric("Spearman inputs must not be NaN");
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}
