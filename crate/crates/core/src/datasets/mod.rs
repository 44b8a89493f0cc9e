//! Data ingestion and synthetic data generators.

pub mod carmen;
pub mod floorplan;
pub mod loaders;
pub mod scene;
pub mod split;
pub mod toy;

pub use carmen::{parse_carmen_log, parse_carmen_str, scans_to_dataset, write_carmen, LaserScan};
pub use floorplan::{simulate_scans, FloorPlan};
pub use loaders::{load_labeled_points, write_labeled_ply, PointFormat};
pub use scene::{render_synthetic_scene, scene_training_data, CameraPose, Primitive, SceneOracle, SceneSpec, Shape, TableSpec};
pub use split::split_train_test;
pub use toy::{generate_toy, ToyKind};
