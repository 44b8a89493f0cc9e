//! Materialising the configured dataset, split and hinges.

use contramap::datasets::{
    generate_toy, load_labeled_points, parse_carmen_log, scans_to_dataset, scene_training_data, simulate_scans, split_train_test,
    FloorPlan, PointFormat, SceneOracle, SceneSpec,
};
use contramap::geometry::{default_gamma, grid_hinges, near_surface_hinges, HingeSet};
use contramap::evaluation::lattice_for_count;
use contramap::sampling::{LabeledDataset, FREE};

use crate::config::{DatasetConfig, HingeConfig, RunConfig};
use crate::{CliError, CliResult, ExitCode};

/// A scene together with its analytic ground truth.
pub struct Scene {
    pub spec: SceneSpec,
    pub oracle: SceneOracle,
}

pub struct Prepared {
    pub train: LabeledDataset,
    pub test: Option<LabeledDataset>,
    pub scene: Option<Scene>,
}

pub fn load_dataset(cfg: &DatasetConfig) -> CliResult<(LabeledDataset, Option<Scene>)> {
    Ok(match cfg {
        DatasetConfig::Toy { kind, n, noise_std, seed } => (generate_toy(*kind, *n, *noise_std, *seed)?, None),
        DatasetConfig::File { path, format } => {
            let format = match format.or_else(|| PointFormat::from_path(path)) {
                Some(f) => f,
                None => return Err(CliError::new(ExitCode::Config, format!("dataset.format: cannot infer from {}", path.display()))),
            };
            (load_labeled_points(path, format)?, None)
        }
        DatasetConfig::Carmen { path, free_step, stride, seed } => {
            (scans_to_dataset(&parse_carmen_log(path)?, *free_step, *stride, *seed)?, None)
        }
        DatasetConfig::Office { pose_spacing, beams, free_step, range_noise, seed } => {
            let plan = FloorPlan::office();
            let poses = FloorPlan::office_trajectory(*pose_spacing);
            let scans = simulate_scans(&plan, &poses, *beams, 40.0, *range_noise, *seed)?;
            (scans_to_dataset(&scans, *free_step, 1, seed.wrapping_add(1))?, None)
        }
        DatasetConfig::Tabletop { objects, num_classes, scene_seed, rays, free_step } => {
            let spec = SceneSpec::random_tabletop(*objects, *num_classes, *scene_seed)?;
            scene_data(spec, *rays, *free_step, *scene_seed)?
        }
        DatasetConfig::Scene { spec, rays, free_step, seed } => scene_data(spec.clone(), *rays, *free_step, *seed)?,
    })
}

fn scene_data(spec: SceneSpec, rays: usize, free_step: f64, seed: u64) -> CliResult<(LabeledDataset, Option<Scene>)> {
    let (data, oracle) = scene_training_data(&spec, rays, free_step, seed)?;
    Ok((data, Some(Scene { spec, oracle })))
}

/// Loads the dataset, applies the split and the training-row cap.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let (data, scene) = load_dataset(&cfg.dataset)?;
    let (mut train, mut test) = match cfg.split {
        Some(r) => {
            let (a, b) = split_train_test(&data, r, cfg.seed)?;
            (a, Some(b))
        }
        None => (data, None),
    };
    if let Some(t) = &cfg.eval.test {
        test = Some(load_dataset(t)?.0);
    }
    if let Some(m) = cfg.max_train_rows {
        if m < train.len() {
            let idx: Vec<usize> = (0..m).collect();
            train = train.subset(&idx);
        }
    }
    Ok(Prepared { train, test, scene })
}

pub fn build_hinges(cfg: &RunConfig, train: &LabeledDataset) -> CliResult<HingeSet> {
    let Some(h) = &cfg.hinges else {
        return Err(CliError::new(ExitCode::Config, "hinges: required to train a map"));
    };
    Ok(match h {
        HingeConfig::Grid { spacing, gamma } => grid_hinges(&train.bounds, *spacing, gamma.unwrap_or(default_gamma(*spacing)))?,
        HingeConfig::Count { count } => lattice_for_count(&train.bounds, *count)?,
        HingeConfig::NearSurface { count, jitter, spacing, gamma } => {
            let idx: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] != FREE).collect();
            let surface = train.points.select(&idx);
            near_surface_hinges(&surface, *count, *jitter, gamma.unwrap_or(default_gamma(*spacing)), cfg.seed)?
        }
    })
}
