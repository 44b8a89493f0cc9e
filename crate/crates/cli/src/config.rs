//! The JSON run-config shared by every subcommand.

use std::path::{Path, PathBuf};

use contramap::datasets::{PointFormat, SceneSpec, ToyKind};
use contramap::evaluation::BenchConfig;
use contramap::geometry::Bounds;
use contramap::optim::TrainConfig;
use contramap::sampling::NoiseSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, ExitCode};

/// Where the observations come from. Dataset seeds belong to the dataset's
/// identity and are not touched by the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Toy {
        kind: ToyKind,
        n: usize,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Labelled points from CSV or PLY; the format follows the extension unless given.
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<PointFormat>,
    },
    /// CARMEN `FLASER` log turned into free/occupied samples.
    Carmen {
        path: PathBuf,
        free_step: f64,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Simulated scans through the built-in office floor plan.
    Office {
        #[serde(default = "office_pose_spacing")]
        pose_spacing: f64,
        #[serde(default = "office_beams")]
        beams: usize,
        #[serde(default = "office_free_step")]
        free_step: f64,
        #[serde(default = "office_range_noise")]
        range_noise: f64,
        #[serde(default = "one_u64")]
        seed: u64,
    },
    /// A randomly generated tabletop scene seen by one camera.
    Tabletop {
        #[serde(default = "three")]
        objects: usize,
        #[serde(default = "five")]
        num_classes: u32,
        #[serde(default)]
        scene_seed: u64,
        #[serde(default = "default_rays")]
        rays: usize,
        #[serde(default = "scene_free_step")]
        free_step: f64,
    },
    /// An explicit scene description.
    Scene {
        spec: SceneSpec,
        #[serde(default = "default_rays")]
        rays: usize,
        #[serde(default = "scene_free_step")]
        free_step: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn three() -> usize {
    3
}
fn five() -> u32 {
    5
}
fn office_pose_spacing() -> f64 {
    1.0
}
fn office_beams() -> usize {
    90
}
fn office_free_step() -> f64 {
    0.75
}
fn office_range_noise() -> f64 {
    0.01
}
fn default_rays() -> usize {
    4096
}
fn scene_free_step() -> f64 {
    0.04
}

impl DatasetConfig {
    pub fn is_scene(&self) -> bool {
        matches!(self, DatasetConfig::Tabletop { .. } | DatasetConfig::Scene { .. })
    }
}

/// Hinge placement; `gamma` defaults to `1 / (2 spacing^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum HingeConfig {
    Grid {
        spacing: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
    /// A lattice over the training bounds with about `count` hinges.
    Count { count: usize },
    /// Jittered copies of occupied training points.
    NearSurface {
        count: usize,
        jitter: f64,
        spacing: f64,
        #[serde(default)]
        gamma: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Contramap,
    Hm,
    Bhm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BhmOptions {
    pub iterations: usize,
    pub prior_variance: f64,
}

impl Default for BhmOptions {
    fn default() -> Self {
        Self { iterations: 10, prior_variance: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Auc,
    Accuracy,
    Iou,
    Miou,
    Chamfer,
    UncertaintyContrast,
}

impl MetricName {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Auc => "auc",
            MetricName::Accuracy => "accuracy",
            MetricName::Iou => "iou",
            MetricName::Miou => "miou",
            MetricName::Chamfer => "chamfer",
            MetricName::UncertaintyContrast => "uncertainty_contrast",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub metrics: Vec<MetricName>,
    /// Held-out data; defaults to the test side of `split`.
    pub test: Option<DatasetConfig>,
    /// Binary reduction for AUC on multiclass data: this class against the rest.
    pub positive_class: Option<u32>,
    /// Reference surface for Chamfer when the data has no analytic scene.
    pub reference_mesh: Option<PathBuf>,
    /// Grid cell edge for scene metrics, metres.
    pub voxel: f64,
    pub level: f64,
    pub surface_samples: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: vec![MetricName::Auc],
            test: None,
            positive_class: None,
            reference_mesh: None,
            voxel: 0.02,
            level: 0.5,
            surface_samples: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapOutput {
    /// `occupancy.pgm` and `uncertainty.pgm` of a 2D model.
    Raster,
    /// `scene.ply` of a 3D model.
    Mesh,
    /// `slice_occupancy.pgm` and `slice_uncertainty.pgm` through a 3D model.
    Slice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapOptions {
    pub outputs: Vec<MapOutput>,
    /// Defaults to the bounds of the training data (or the scene's table volume).
    pub bounds: Option<Bounds>,
    /// Cells per axis for rasters and slices, nodes per axis for meshes.
    pub resolution: Vec<usize>,
    pub level: f64,
    /// Slice height; defaults to just above the table top for scenes.
    pub z: Option<f64>,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { outputs: vec![MapOutput::Raster], bounds: None, resolution: vec![200, 200], level: 0.5, z: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Training fraction of a shuffled split; `None` trains on everything.
    #[serde(default)]
    pub split: Option<f64>,
    /// Keep only the first rows of the training side.
    #[serde(default)]
    pub max_train_rows: Option<usize>,
    /// Required by `train`; the benchmark places its own lattices.
    #[serde(default)]
    pub hinges: Option<HingeConfig>,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bhm: BhmOptions,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub map: MapOptions,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    /// Run seed: overrides the training, noise, split and hinge seeds.
    #[serde(default)]
    pub seed: u64,
    /// Output location; not part of the recorded config, so artifacts are relocatable.
    #[serde(default = "default_outdir", skip_serializing)]
    pub outdir: PathBuf,
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::occupancy(0)
}

fn default_outdir() -> PathBuf {
    PathBuf::from("out")
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::new(ExitCode::Config, msg)
}

impl RunConfig {
    /// Parses, applies overrides, propagates the run seed and validates.
    pub fn load(path: &Path, outdir: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text, outdir, seed)
    }

    pub fn from_json(text: &str, outdir: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(format!("invalid config at `{path}`: {}", e.inner()))
        })?;
        if let Some(o) = outdir {
            cfg.outdir = o;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        cfg.noise.seed = cfg.seed;
        if let Some(b) = cfg.bench.as_mut() {
            b.train.seed = cfg.seed;
            b.noise.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let lib = |r: contramap::Result<()>| r.map_err(|e| invalid(e.to_string()));
        lib(self.train.validate())?;
        lib(self.noise.validate())?;
        if let Some(b) = &self.bench {
            lib(b.validate())?;
        }
        if let Some(r) = self.split {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid(format!("split: training fraction must lie in (0, 1), got {r}")));
            }
        }
        if self.max_train_rows == Some(0) {
            return Err(invalid("max_train_rows: must be positive"));
        }
        match self.hinges.as_ref().unwrap_or(&HingeConfig::Count { count: 1 }) {
            HingeConfig::Grid { spacing, gamma } | HingeConfig::NearSurface { spacing, gamma, .. } => {
                if !(*spacing > 0.0 && spacing.is_finite()) {
                    return Err(invalid(format!("hinges.spacing: must be positive, got {spacing}")));
                }
                if gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
                    return Err(invalid("hinges.gamma: must be positive"));
                }
            }
            HingeConfig::Count { count } if *count == 0 => return Err(invalid("hinges.count: must be positive")),
            HingeConfig::Count { .. } => {}
        }
        if self.bhm.iterations == 0 || !(self.bhm.prior_variance > 0.0) {
            return Err(invalid("bhm: iterations and prior_variance must be positive"));
        }
        if !(self.eval.voxel > 0.0) || self.eval.surface_samples == 0 {
            return Err(invalid("eval: voxel and surface_samples must be positive"));
        }
        if let Some(b) = &self.map.bounds {
            lib(b.validate())?;
        }
        Ok(())
    }

    /// Canonical JSON of the resolved config.
    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serialises")
    }

    /// Hex SHA-256 of the compact resolved config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.resolved_json()).expect("json serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn provenance(&self) -> serde_json::Value {
        serde_json::json!({ "config_sha256": self.digest(), "config": self.resolved_json() })
    }
}
