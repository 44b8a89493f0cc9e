//! Train and inference timing over a sweep of hinge counts.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::compute_auc;
use super::report::{EvalReport, MetricSummary};
use crate::baselines::{bhm_predict, fit_bhm, fit_hm, BhmPrior};
use crate::classifier::{fit, occupancy_probability, predict};
use crate::error::{param, Result};
use crate::geometry::{default_gamma, grid_hinges, solve_grid_spacing, Bounds, HingeSet, Points};
use crate::optim::TrainConfig;
use crate::sampling::{augment_with_noise, LabeledDataset, NoiseSpec, FREE, OCCUPIED};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Contramap,
    Hm,
    Bhm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Contramap => "contramap",
            Method::Hm => "hm",
            Method::Bhm => "bhm",
        })
    }
}

fn default_repeats() -> usize {
    3
}
fn default_bhm_iterations() -> usize {
    5
}
fn default_query_resolution() -> usize {
    100
}
fn default_memory_budget() -> u64 {
    3 << 30
}
fn default_noise() -> NoiseSpec {
    NoiseSpec::occupancy(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub hinge_counts: Vec<usize>,
    pub methods: Vec<Method>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default = "default_bhm_iterations")]
    pub bhm_iterations: usize,
    /// Inference grid cells per axis.
    #[serde(default = "default_query_resolution")]
    pub query_resolution: usize,
    /// Cells whose estimated working set exceeds this are skipped as failed.
    #[serde(default = "default_memory_budget")]
    pub memory_budget_bytes: u64,
}

impl BenchConfig {
    pub fn new(hinge_counts: Vec<usize>, methods: Vec<Method>) -> Self {
        Self {
            hinge_counts,
            methods,
            repeats: default_repeats(),
            train: TrainConfig::default(),
            noise: default_noise(),
            bhm_iterations: default_bhm_iterations(),
            query_resolution: default_query_resolution(),
            memory_budget_bytes: default_memory_budget(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hinge_counts.len() < 3 {
            return param("a scaling sweep needs at least three hinge counts");
        }
        if self.hinge_counts.windows(2).any(|w| w[1] <= w[0]) || self.hinge_counts[0] == 0 {
            return param("hinge counts must be positive and strictly ascending");
        }
        if self.methods.is_empty() || self.repeats == 0 {
            return param("a benchmark needs at least one method and one repeat");
        }
        if self.query_resolution < 2 {
            return param("query resolution must be at least 2");
        }
        self.train.validate()?;
        self.noise.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub method: Method,
    pub requested_hinges: usize,
    /// Hinges actually placed by the lattice.
    pub hinges: usize,
    pub train_seconds_median: f64,
    pub train_seconds_mean: f64,
    pub train_seconds_std: f64,
    pub infer_seconds: f64,
    pub auc: Option<f64>,
    /// `None` on success, otherwise the failure reason.
    pub failure: Option<String>,
}

impl ScalingCell {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub cells: Vec<ScalingCell>,
    /// Least-squares slope of log(train time) on log(hinges), per method.
    pub slopes: BTreeMap<Method, Option<f64>>,
}

impl ScalingReport {
    pub fn cell(&self, method: Method, requested: usize) -> Option<&ScalingCell> {
        self.cells.iter().find(|c| c.method == method && c.requested_hinges == requested)
    }

    pub fn slope(&self, method: Method) -> Option<f64> {
        self.slopes.get(&method).copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,requested_hinges,hinges,train_seconds_median,train_seconds_mean,train_seconds_std,infer_seconds,auc,status\n",
        );
        for c in &self.cells {
            let auc = c.auc.map(|a| a.to_string()).unwrap_or_default();
            let status = match &c.failure {
                None => "OK".to_string(),
                Some(msg) => format!("FAILED: {}", msg.replace([',', '\n'], ";")),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.method,
                c.requested_hinges,
                c.hinges,
                c.train_seconds_median,
                c.train_seconds_mean,
                c.train_seconds_std,
                c.infer_seconds,
                auc,
                status
            ));
        }
        out
    }

    pub fn to_eval_report(&self, config_digest: &str) -> EvalReport {
        let mut r = EvalReport::new(config_digest);
        let mut slopes = BTreeMap::new();
        for (m, s) in &self.slopes {
            if let Some(s) = s {
                slopes.insert(m.to_string(), *s);
            }
        }
        r.insert_table("time_slope", slopes);
        for c in self.cells.iter().filter(|c| !c.failed()) {
            let key = format!("{}/{}", c.method, c.requested_hinges);
            if let Some(a) = c.auc {
                r.insert_metric(format!("auc/{key}"), MetricSummary::single(a));
            }
            r.insert_metric(
                format!("train_seconds/{key}"),
                MetricSummary { value: c.train_seconds_mean, std: c.train_seconds_std },
            );
            r.insert_timing(format!("train_median/{key}"), c.train_seconds_median);
            r.insert_timing(format!("infer/{key}"), c.infer_seconds);
        }
        r
    }
}

/// Cell centres of a regular grid over `bounds`.
pub fn query_grid_points(bounds: &Bounds, per_axis: usize) -> Points {
    let d = bounds.dim();
    let total = per_axis.pow(d as u32);
    let mut pts = Points::with_capacity(d, total);
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    for _ in 0..total {
        for a in 0..d {
            p[a] = bounds.min[a] + (idx[a] as f64 + 0.5) * bounds.extent(a) / per_axis as f64;
        }
        pts.push(&p);
        for i in idx.iter_mut() {
            *i += 1;
            if *i < per_axis {
                break;
            }
            *i = 0;
        }
    }
    pts
}

/// Lattice hinges over `bounds` with a count close to `target` and the default bandwidth.
pub fn lattice_for_count(bounds: &Bounds, target: usize) -> Result<HingeSet> {
    let spacing = solve_grid_spacing(bounds, target)?;
    grid_hinges(bounds, spacing, default_gamma(spacing))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-9).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// A trained map reduced to occupancy scoring.
enum Fitted {
    Contramap(crate::classifier::SoftmaxMapModel),
    Hm(crate::baselines::HmModel),
    Bhm(crate::baselines::BhmModel),
}

impl Fitted {
    fn occupancy(&self, q: &Points) -> Result<Vec<f64>> {
        match self {
            Fitted::Contramap(m) => {
                let p = predict(m, q)?;
                Ok(p.rows().map(|r| occupancy_probability(r, OCCUPIED, FREE)).collect())
            }
            Fitted::Hm(m) => m.predict(q),
            Fitted::Bhm(m) => Ok(bhm_predict(m, q)?.0),
        }
    }
}

fn train_once(method: Method, train: &LabeledDataset, hinges: &HingeSet, cfg: &BenchConfig) -> Result<Fitted> {
    Ok(match method {
        Method::Contramap => {
            let aug = augment_with_noise(train, &cfg.noise)?;
            Fitted::Contramap(fit(&aug, hinges, &cfg.train)?.model)
        }
        Method::Hm => Fitted::Hm(fit_hm(train, hinges, &cfg.train)?.0),
        Method::Bhm => {
            let prior = BhmPrior::default_for(hinges);
            Fitted::Bhm(fit_bhm(train, hinges, &prior, cfg.bhm_iterations)?)
        }
    })
}

fn estimated_bytes(method: Method, n: usize, width: usize) -> u64 {
    let (n, w) = (n as u64, width as u64);
    match method {
        // Features plus a scaled copy, and a handful of dense width x width matrices.
        Method::Bhm => 8 * (3 * n * w + 6 * w * w),
        Method::Contramap => 8 * (2 * n * w * 2),
        Method::Hm => 8 * (n * w * 2),
    }
}

/// Runs every method at every hinge count; failures are recorded per cell.
///
/// Each method gets one discarded warm-up fit at the smallest hinge count.
/// Reported train time is the median over `repeats` wall-clock fits.
pub fn scaling_benchmark(train: &LabeledDataset, test: &LabeledDataset, cfg: &BenchConfig) -> Result<ScalingReport> {
    cfg.validate()?;
    if train.num_known_classes != 2 || train.has_noise() {
        return param("the scaling benchmark runs on binary free/occupied data without noise");
    }
    let positive: Vec<bool> = test.labels.iter().map(|&l| l == OCCUPIED).collect();
    let queries = query_grid_points(&train.bounds, cfg.query_resolution);
    let mut cells = Vec::new();
    let mut slopes = BTreeMap::new();
    for &method in &cfg.methods {
        let mut warmed = false;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &h in &cfg.hinge_counts {
            let mut cell = ScalingCell {
                method,
                requested_hinges: h,
                hinges: 0,
                train_seconds_median: 0.0,
                train_seconds_mean: 0.0,
                train_seconds_std: 0.0,
                infer_seconds: 0.0,
                auc: None,
                failure: None,
            };
            let outcome = (|| -> Result<()> {
                let hinges = lattice_for_count(&train.bounds, h)?;
                cell.hinges = hinges.len();
                let rows = if method == Method::Contramap { 2 * train.len() } else { train.len() };
                let need = estimated_bytes(method, rows, hinges.feature_width());
                if need > cfg.memory_budget_bytes {
                    return param(format!("estimated {need} bytes exceeds the memory budget"));
                }
                if !warmed {
                    train_once(method, train, &hinges, cfg)?;
                    warmed = true;
                }
                let mut times = Vec::with_capacity(cfg.repeats);
                let mut model = None;
                for _ in 0..cfg.repeats {
                    let t0 = Instant::now();
                    let m = train_once(method, train, &hinges, cfg)?;
                    times.push(t0.elapsed().as_secs_f64());
                    model = Some(m);
                }
                let model = model.unwrap();
                let summary = MetricSummary::from_samples(&times)?;
                cell.train_seconds_mean = summary.value;
                cell.train_seconds_std = summary.std;
                cell.train_seconds_median = median(&mut times);
                let t0 = Instant::now();
                model.occupancy(&queries)?;
                cell.infer_seconds = t0.elapsed().as_secs_f64();
                if !test.is_empty() {
                    let scores = model.occupancy(&test.points)?;
                    cell.auc = compute_auc(&scores, &positive).ok();
                }
                Ok(())
            })();
            match outcome {
                Ok(()) => {
                    xs.push(cell.hinges as f64);
                    ys.push(cell.train_seconds_median);
                }
                Err(e) => {
                    log::warn!("{method} with {h} hinges failed: {e}");
                    cell.failure = Some(e.to_string());
                }
            }
            cells.push(cell);
        }
        slopes.insert(method, log_log_slope(&xs, &ys));
    }
    Ok(ScalingReport { cells, slopes })
}
