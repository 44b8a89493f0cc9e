//! Metrics, the uncertainty-ordering diagnostic, the scaling benchmark and
//! scene scoring against analytic oracles.

mod bench;
mod diagnostics;
mod metrics;
mod report;
mod tabletop;

pub use bench::{lattice_for_count, query_grid_points, scaling_benchmark, BenchConfig, Method, ScalingCell, ScalingReport};
pub use diagnostics::{monotonicity_diagnostic, posterior_is_monotone_in_distance, MixtureModelConfig, MonotonicityReport};
pub use metrics::{average_ranks, compute_auc, compute_chamfer, compute_iou, distance_to_data, spearman, Correlation, IouReport};
pub use report::{EvalReport, MetricSummary};
pub use tabletop::{labelled_grid, score_tabletop, semantic_grid_iou, tabletop_region, TabletopEvalConfig, TabletopScore};
