//! The four subcommands. Each returns the artifacts it wrote; errors carry their exit code.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use contramap::baselines::{bhm_predict, fit_bhm, fit_hm, BhmPrior};
use contramap::classifier::{fit, predict, SoftmaxMapModel};
use contramap::evaluation::{
    compute_auc, compute_chamfer, compute_iou, scaling_benchmark, score_tabletop, semantic_grid_iou, tabletop_region, EvalReport,
    MetricSummary, ScalingReport, TabletopEvalConfig, TabletopScore,
};
use contramap::geometry::{Bounds, Points};
use contramap::persist::{load_model, save_model_with_provenance, SavedModel};
use contramap::reconstruction::{extract_mesh, ChannelSelector, CornerField, Mesh, MeshStatus, Raster, ScalarField, SLICE_OFFSET};
use contramap::sampling::{augment_with_noise, LabeledDataset, FREE, OCCUPIED};
use log::{info, warn};

use crate::config::{MapOutput, MetricName, ModelKind, RunConfig};
use crate::data::{build_hinges, prepare, Scene};
use crate::{CliError, CliResult, ExitCode};

pub fn model_path(cfg: &RunConfig) -> PathBuf {
    cfg.outdir.join("model.json")
}

fn create_outdir(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.outdir)
        .map_err(|e| CliError::new(ExitCode::Data, format!("cannot create output directory {}: {e}", cfg.outdir.display())))
}

fn digest_line(cfg: &RunConfig) -> String {
    format!("config_sha256={}", cfg.digest())
}

fn write_resolved_config(cfg: &RunConfig) -> CliResult<PathBuf> {
    let p = cfg.outdir.join("resolved-config.json");
    let text = serde_json::to_string_pretty(&cfg.provenance()).expect("json serialises");
    std::fs::write(&p, text + "\n")?;
    Ok(p)
}

/// Trains the configured map; writes `model.json`, `model.bin`, `loss.csv` and `resolved-config.json`.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = prepare(cfg)?;
    let hinges = build_hinges(cfg, &data.train)?;
    info!("training {:?} on {} rows with {} hinges", cfg.model, data.train.len(), hinges.len());
    let t = Instant::now();
    let (model, history, column) = match cfg.model {
        ModelKind::Contramap => {
            let aug = augment_with_noise(&data.train, &cfg.noise)?;
            let trained = fit(&aug, &hinges, &cfg.train)?;
            (SavedModel::Contramap(trained.model), trained.loss_history, "loss")
        }
        ModelKind::Hm => {
            let (m, hist) = fit_hm(&data.train, &hinges, &cfg.train)?;
            (SavedModel::Hm(m), hist, "loss")
        }
        ModelKind::Bhm => {
            let prior = BhmPrior::isotropic(hinges.feature_width(), cfg.bhm.prior_variance)?;
            let m = fit_bhm(&data.train, &hinges, &prior, cfg.bhm.iterations)?;
            let hist = m.bound_history.clone();
            (SavedModel::Bhm(m), hist, "bound")
        }
    };
    info!("trained in {:.2} s", t.elapsed().as_secs_f64());

    create_outdir(cfg)?;
    let json = model_path(cfg);
    let bin = save_model_with_provenance(&model, &json, Some(cfg.provenance()))?;
    let loss = cfg.outdir.join("loss.csv");
    let mut text = format!("# {}\nstep,{column}\n", digest_line(cfg));
    for (i, v) in history.iter().enumerate() {
        let _ = writeln!(text, "{},{v}", i + 1);
    }
    std::fs::write(&loss, text)?;
    let resolved = write_resolved_config(cfg)?;
    Ok(vec![json, bin, loss, resolved])
}

fn load_trained(cfg: &RunConfig) -> CliResult<SavedModel> {
    let p = model_path(cfg);
    load_model(&p).map_err(|e| CliError::new(ExitCode::Data, format!("cannot load model {}: {e}", p.display())))
}

fn metric_error(name: MetricName, why: impl std::fmt::Display) -> CliError {
    CliError::new(ExitCode::Metric, format!("metric {}: {why}", name.as_str()))
}

/// Occupancy score in [0, 1] per query, for any model kind.
fn occupancy_scores(model: &SavedModel, q: &Points) -> CliResult<Vec<f64>> {
    Ok(match model {
        SavedModel::Contramap(m) => {
            // For binary maps this equals p_occ / (p_occ + p_free).
            predict(m, q)?.rows().map(|r| ChannelSelector::NotFree.apply(r)).collect::<contramap::Result<_>>()?
        }
        SavedModel::Hm(m) => m.predict(q)?,
        SavedModel::Bhm(m) => bhm_predict(m, q)?.0,
    })
}

fn predicted_labels(model: &SavedModel, q: &Points, level: f64) -> CliResult<Vec<u32>> {
    Ok(match model {
        SavedModel::Contramap(m) => predict(m, q)?.argmax_known(),
        _ => occupancy_scores(model, q)?.into_iter().map(|s| if s >= level { OCCUPIED } else { FREE }).collect(),
    })
}

fn contramap_3d(model: &SavedModel, name: MetricName) -> CliResult<&SoftmaxMapModel> {
    match model {
        SavedModel::Contramap(m) if m.hinges().dim() == 3 => Ok(m),
        _ => Err(metric_error(name, "needs a 3D contramap model")),
    }
}

/// Scene metrics are computed once and shared between the metrics that need them.
struct SceneScores<'a> {
    scene: Option<&'a Scene>,
    cfg: TabletopEvalConfig,
    cached: Option<TabletopScore>,
}

impl SceneScores<'_> {
    fn get(&mut self, model: &SoftmaxMapModel) -> CliResult<&TabletopScore> {
        if self.cached.is_none() {
            let s = self.scene.expect("checked by caller");
            self.cached = Some(score_tabletop(model, &s.spec, &s.oracle, &self.cfg)?.0);
        }
        Ok(self.cached.as_ref().unwrap())
    }
}

fn class_table(per_class: &BTreeMap<u32, f64>) -> BTreeMap<String, f64> {
    per_class.iter().map(|(c, v)| (format!("class_{c}"), *v)).collect()
}

/// Evaluates the trained model on held-out data; writes `report.json` and `report.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> CliResult<EvalReport> {
    let model = load_trained(cfg)?;
    let data = prepare(cfg)?;
    let test: LabeledDataset = match data.test {
        Some(t) => t,
        None if data.scene.is_some() => data.train,
        None => return Err(CliError::new(ExitCode::Config, "eval: needs `split` or `eval.test` for held-out data")),
    };
    let mut report = EvalReport::new(cfg.digest());
    report.config = Some(cfg.resolved_json());
    let t = Instant::now();
    let scores = occupancy_scores(&model, &test.points)?;
    let labels = predicted_labels(&model, &test.points, cfg.eval.level)?;
    report.insert_timing("predict_seconds", t.elapsed().as_secs_f64());
    let mut scene = SceneScores {
        scene: data.scene.as_ref(),
        cfg: TabletopEvalConfig {
            voxel: cfg.eval.voxel,
            level: cfg.eval.level,
            surface_samples: cfg.eval.surface_samples,
            seed: cfg.seed,
            ..Default::default()
        },
        cached: None,
    };
    let mut metrics = cfg.eval.metrics.clone();
    metrics.sort();
    metrics.dedup();
    for name in metrics {
        let t = Instant::now();
        match name {
            MetricName::Auc => {
                let (s, pos) = match (test.num_known_classes, cfg.eval.positive_class, &model) {
                    (2, None, _) => (scores.clone(), test.labels.iter().map(|&l| l == OCCUPIED).collect::<Vec<_>>()),
                    (_, Some(c), SavedModel::Contramap(m)) if c >= 1 && c <= m.num_known_classes() => {
                        let p = predict(m, &test.points)?;
                        (p.channel(c), test.labels.iter().map(|&l| l == c).collect())
                    }
                    (_, Some(c), _) => return Err(metric_error(name, format!("positive class {c} is not a class of the model"))),
                    (k, None, _) => {
                        return Err(metric_error(name, format!("data has {k} classes; set eval.positive_class for a binary reduction")))
                    }
                };
                let auc = compute_auc(&s, &pos).map_err(|e| metric_error(name, e))?;
                report.insert_metric("auc", MetricSummary::single(auc));
            }
            MetricName::Accuracy => {
                let hits = labels.iter().zip(&test.labels).filter(|(a, b)| a == b).count();
                report.insert_metric("accuracy", MetricSummary::single(hits as f64 / test.len() as f64));
            }
            MetricName::Iou => {
                let iou = if scene.scene.is_some() {
                    scene.get(contramap_3d(&model, name)?)?.iou
                } else {
                    let pred: Vec<u32> = scores.iter().map(|&s| if s >= cfg.eval.level { OCCUPIED } else { FREE }).collect();
                    let truth: Vec<u32> = test.labels.iter().map(|&l| if l == FREE { FREE } else { OCCUPIED }).collect();
                    let r = compute_iou(&pred, &truth, &[OCCUPIED]).map_err(|e| metric_error(name, e))?;
                    r.per_class.get(&OCCUPIED).copied().unwrap_or(0.0)
                };
                report.insert_metric("iou", MetricSummary::single(iou));
            }
            MetricName::Miou => {
                let r = match (data.scene.as_ref(), &model) {
                    (Some(s), SavedModel::Contramap(m)) => {
                        let classes: Vec<u32> = (2..=s.spec.num_classes).collect();
                        let region = tabletop_region(&s.spec, &s.oracle)?;
                        semantic_grid_iou(m, &s.oracle, &region, cfg.eval.voxel, &classes).map_err(|e| metric_error(name, e))?
                    }
                    _ => {
                        let classes: Vec<u32> = (1..=test.num_known_classes).collect();
                        compute_iou(&labels, &test.labels, &classes).map_err(|e| metric_error(name, e))?
                    }
                };
                report.insert_metric("miou", MetricSummary::single(r.miou));
                report.insert_table("iou_per_class", class_table(&r.per_class));
            }
            MetricName::Chamfer => {
                let m = contramap_3d(&model, name)?;
                let ch = if scene.scene.is_some() {
                    scene.get(m)?.chamfer
                } else if let Some(path) = &cfg.eval.reference_mesh {
                    let reference = Mesh::read_ply(path)?;
                    let mesh = model_mesh(m, &test.bounds, cfg.eval.voxel, cfg.eval.level)?;
                    if mesh.is_empty() || reference.is_empty() {
                        return Err(metric_error(name, "a mesh is empty"));
                    }
                    let n = cfg.eval.surface_samples;
                    compute_chamfer(&mesh.sample_surface(n, cfg.seed)?, &reference.sample_surface(n, cfg.seed)?).map_err(|e| metric_error(name, e))?
                } else {
                    return Err(metric_error(name, "needs meshes: a scene dataset or eval.reference_mesh"));
                };
                if !ch.is_finite() {
                    return Err(metric_error(name, "the extracted mesh is empty"));
                }
                report.insert_metric("chamfer", MetricSummary::single(ch));
            }
            MetricName::UncertaintyContrast => {
                if scene.scene.is_none() {
                    return Err(metric_error(name, "needs a scene dataset with a camera"));
                }
                let c = scene.get(contramap_3d(&model, name)?)?.uncertainty_contrast();
                if !c.is_finite() {
                    return Err(metric_error(name, "no occluded or no visible cells on the slice"));
                }
                report.insert_metric("uncertainty_contrast", MetricSummary::single(c));
            }
        }
        report.insert_timing(format!("{}_seconds", name.as_str()), t.elapsed().as_secs_f64());
    }
    create_outdir(cfg)?;
    report.write(&cfg.outdir.join("report.json"), Some(&cfg.outdir.join("report.csv")))?;
    Ok(report)
}

fn model_mesh(model: &SoftmaxMapModel, bounds: &Bounds, voxel: f64, level: f64) -> CliResult<Mesh> {
    let dims: [usize; 3] = std::array::from_fn(|a| (bounds.extent(a) / voxel).round() as usize + 1);
    let field = CornerField::from_model(model, bounds, dims, ChannelSelector::NotFree)?;
    Ok(extract_mesh(&field, level)?.0)
}

fn write_pair(field: &ScalarField, occ: &Path, unc: &Path, comment: &str) -> CliResult<()> {
    Raster::from_field(field, ChannelSelector::NotFree)?.write_pgm_with_comments(occ, &[comment])?;
    Raster::from_field(field, ChannelSelector::Uncertainty)?.write_pgm_with_comments(unc, &[comment])?;
    Ok(())
}

/// Renders rasters, slices and meshes of the trained ContraMap model.
pub fn cmd_map(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let model = match load_trained(cfg)? {
        SavedModel::Contramap(m) => m,
        other => return Err(CliError::new(ExitCode::Config, format!("map: needs a contramap model, found {}", other.kind()))),
    };
    let opts = &cfg.map;
    if let Some(r) = opts.resolution.iter().find(|&&r| r < 2) {
        return Err(CliError::new(ExitCode::Config, format!("map.resolution: at least 2 per axis, got {r}")));
    }
    let dim = model.hinges().dim();
    // The dataset is only needed for default bounds and scene heights.
    let data = if opts.bounds.is_none() || (opts.z.is_none() && opts.outputs.contains(&MapOutput::Slice)) { Some(prepare(cfg)?) } else { None };
    let scene = data.as_ref().and_then(|d| d.scene.as_ref());
    let bounds = match (&opts.bounds, scene) {
        (Some(b), _) => b.clone(),
        (None, Some(s)) => tabletop_region(&s.spec, &s.oracle)?,
        (None, None) => data.as_ref().expect("loaded above").train.bounds.clone(),
    };
    if bounds.dim() != dim {
        return Err(CliError::new(ExitCode::Config, format!("map.bounds: {}D bounds for a {dim}D model", bounds.dim())));
    }
    create_outdir(cfg)?;
    let comment = digest_line(cfg);
    let mut written = Vec::new();
    for out in &opts.outputs {
        match out {
            MapOutput::Raster => {
                if dim != 2 {
                    return Err(CliError::new(ExitCode::Config, "map.outputs: raster needs a 2D model; use slice for 3D"));
                }
                let field = ScalarField::query_grid(&model, &bounds, &opts.resolution)?;
                let (o, u) = (cfg.outdir.join("occupancy.pgm"), cfg.outdir.join("uncertainty.pgm"));
                write_pair(&field, &o, &u, &comment)?;
                written.extend([o, u]);
            }
            MapOutput::Slice => {
                if dim != 3 || opts.resolution.len() < 2 {
                    return Err(CliError::new(ExitCode::Config, "map.outputs: slice needs a 3D model and two resolutions"));
                }
                let z = opts.z.or(scene.map(|s| s.spec.table_height + SLICE_OFFSET)).unwrap_or(bounds.centre()[2]);
                let field = ScalarField::query_slice(&model, &bounds, z, [opts.resolution[0], opts.resolution[1]])?;
                let (o, u) = (cfg.outdir.join("slice_occupancy.pgm"), cfg.outdir.join("slice_uncertainty.pgm"));
                write_pair(&field, &o, &u, &comment)?;
                written.extend([o, u]);
            }
            MapOutput::Mesh => {
                if dim != 3 || opts.resolution.len() != 3 {
                    return Err(CliError::new(ExitCode::Config, "map.outputs: mesh needs a 3D model and three resolutions"));
                }
                let dims = [opts.resolution[0], opts.resolution[1], opts.resolution[2]];
                let field = CornerField::from_model(&model, &bounds, dims, ChannelSelector::NotFree)?;
                let (mesh, status) = extract_mesh(&field, opts.level)?;
                if status == MeshStatus::Empty {
                    warn!("the level set {} does not cross the field; scene.ply is empty", opts.level);
                }
                let p = cfg.outdir.join("scene.ply");
                mesh.write_ply_with_comments(&p, &[&comment])?;
                info!("mesh with {} triangles", mesh.triangles.len());
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Scaling sweep; writes `bench.csv`, one `bench_<method>.csv` per method and `bench_report.json`.
pub fn cmd_bench(cfg: &RunConfig) -> CliResult<ScalingReport> {
    let Some(bench) = &cfg.bench else {
        return Err(CliError::new(ExitCode::Config, "bench: section missing"));
    };
    let data = prepare(cfg)?;
    let Some(test) = data.test else {
        return Err(CliError::new(ExitCode::Config, "bench: needs `split` or `eval.test` for held-out AUC"));
    };
    // Failed cells are logged by the benchmark and kept as FAILED rows.
    let report = scaling_benchmark(&data.train, &test, bench)?;
    create_outdir(cfg)?;
    let head = format!("# {}\n", digest_line(cfg));
    let csv = report.to_csv();
    std::fs::write(cfg.outdir.join("bench.csv"), format!("{head}{csv}"))?;
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let rows: Vec<&str> = lines.collect();
    for m in &bench.methods {
        let mut text = format!("{head}{header}\n");
        for r in rows.iter().filter(|r| r.starts_with(&format!("{m},"))) {
            text.push_str(r);
            text.push('\n');
        }
        std::fs::write(cfg.outdir.join(format!("bench_{m}.csv")), text)?;
    }
    let mut er = report.to_eval_report(&cfg.digest());
    er.config = Some(cfg.resolved_json());
    er.write(&cfg.outdir.join("bench_report.json"), None)?;
    Ok(report)
}
