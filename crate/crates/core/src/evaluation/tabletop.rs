//! Scoring a 3D map against the analytic oracle of a synthetic tabletop scene.

use serde::{Deserialize, Serialize};

use crate::classifier::SoftmaxMapModel;
use crate::datasets::{SceneOracle, SceneSpec};
use crate::error::{param, Result};
use crate::geometry::{Bounds, Points};
use crate::reconstruction::{extract_mesh, ChannelSelector, CornerField, Mesh, MeshStatus, ScalarField, SLICE_OFFSET};
use crate::sampling::OCCUPIED;

use super::metrics::{compute_chamfer, compute_iou, IouReport};

/// Table footprint from the underside of the table to the top of the workspace.
pub fn tabletop_region(spec: &SceneSpec, oracle: &SceneOracle) -> Result<Bounds> {
    let t = &spec.table;
    Bounds::new(
        vec![t.min[0], t.min[1], spec.table_height - t.thickness],
        vec![t.max[0], t.max[1], oracle.workspace().max[2]],
    )
}

/// Cell centres of a grid over `region` with cells of edge about `voxel`,
/// together with the oracle class of each.
pub fn labelled_grid(oracle: &SceneOracle, region: &Bounds, voxel: f64) -> Result<(Vec<usize>, Points, Vec<u32>)> {
    let res = cells_per_axis(region, voxel)?;
    let mut pts = Points::with_capacity(3, res.iter().product());
    for k in 0..res[2] {
        for j in 0..res[1] {
            for i in 0..res[0] {
                let idx = [i, j, k];
                let p: [f64; 3] = std::array::from_fn(|a| region.min[a] + (idx[a] as f64 + 0.5) * region.extent(a) / res[a] as f64);
                pts.push(&p);
            }
        }
    }
    let truth = pts.iter().map(|p| oracle.class_at([p[0], p[1], p[2]])).collect();
    Ok((res, pts, truth))
}

fn cells_per_axis(region: &Bounds, voxel: f64) -> Result<Vec<usize>> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return param(format!("voxel size must be positive, got {voxel}"));
    }
    Ok((0..region.dim()).map(|a| ((region.extent(a) / voxel).round() as usize).max(2)).collect())
}

/// Per-class IoU of ContraMap's most probable known class on a cell grid.
pub fn semantic_grid_iou(
    model: &SoftmaxMapModel,
    oracle: &SceneOracle,
    region: &Bounds,
    voxel: f64,
    classes: &[u32],
) -> Result<IouReport> {
    let (res, _, truth) = labelled_grid(oracle, region, voxel)?;
    let field = ScalarField::query_grid(model, region, &res)?;
    compute_iou(&field.argmax_known(), &truth, classes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabletopScore {
    /// Occupied-vs-free IoU over the grid nodes.
    pub iou: f64,
    /// Symmetric Chamfer distance, metres.
    pub chamfer: f64,
    /// Largest grid spacing, metres.
    pub voxel_edge: f64,
    pub triangles: usize,
    /// Mean uncertainty over slice cells behind the objects' centre line and hidden from the camera.
    pub occluded_back: f64,
    /// Mean uncertainty over slice cells in front of the centre line and in view.
    pub visible_front: f64,
    pub occluded_cells: usize,
    pub visible_cells: usize,
}

impl TabletopScore {
    pub fn chamfer_in_voxels(&self) -> f64 {
        self.chamfer / self.voxel_edge
    }

    pub fn uncertainty_contrast(&self) -> f64 {
        self.occluded_back - self.visible_front
    }
}

/// Knobs of [`score_tabletop`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabletopEvalConfig {
    pub voxel: f64,
    pub level: f64,
    pub surface_samples: usize,
    pub slice_resolution: [usize; 2],
    pub seed: u64,
}

impl Default for TabletopEvalConfig {
    fn default() -> Self {
        Self { voxel: 0.02, level: 0.5, surface_samples: 5000, slice_resolution: [64, 64], seed: 0 }
    }
}

/// IoU, mesh Chamfer and the occlusion uncertainty contrast of one scene.
///
/// Occupancy is `1 - p(free)`. The contrast is read on a horizontal slice just
/// above the table top, over table cells outside every solid; a cell counts as
/// occluded when the ray from the camera meets a solid before reaching it.
pub fn score_tabletop(model: &SoftmaxMapModel, spec: &SceneSpec, oracle: &SceneOracle, cfg: &TabletopEvalConfig) -> Result<(TabletopScore, Mesh)> {
    let region = tabletop_region(spec, oracle)?;
    let res = cells_per_axis(&region, cfg.voxel)?;
    let dims = [res[0] + 1, res[1] + 1, res[2] + 1];
    let field = CornerField::from_model(model, &region, dims, ChannelSelector::NotFree)?;
    let s = field.spacing();
    let voxel_edge = s[0].max(s[1]).max(s[2]);

    let mut pred = Vec::with_capacity(field.values.len());
    let mut truth = Vec::with_capacity(field.values.len());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                pred.push(if field.value(i, j, k) >= cfg.level { OCCUPIED } else { 0 });
                truth.push(if oracle.occupied(field.node(i, j, k)) { OCCUPIED } else { 0 });
            }
        }
    }
    let iou = compute_iou(&pred, &truth, &[OCCUPIED])?.per_class.get(&OCCUPIED).copied().unwrap_or(0.0);

    let (mesh, status) = extract_mesh(&field, cfg.level)?;
    let chamfer = if status == MeshStatus::Empty {
        f64::INFINITY
    } else {
        let a = mesh.sample_surface(cfg.surface_samples, cfg.seed)?;
        let b = oracle.sample_surface(cfg.surface_samples, &region, cfg.seed);
        compute_chamfer(&a, &b)?
    };

    let (occluded_back, visible_front, occluded_cells, visible_cells) = occlusion_contrast(model, spec, oracle, cfg.slice_resolution)?;
    let score = TabletopScore {
        iou,
        chamfer,
        voxel_edge,
        triangles: mesh.triangles.len(),
        occluded_back,
        visible_front,
        occluded_cells,
        visible_cells,
    };
    Ok((score, mesh))
}

fn occlusion_contrast(model: &SoftmaxMapModel, spec: &SceneSpec, oracle: &SceneOracle, res: [usize; 2]) -> Result<(f64, f64, usize, usize)> {
    let ws = oracle.workspace();
    let z = spec.table_height + SLICE_OFFSET;
    let slice = ScalarField::query_slice(model, ws, z, res)?;
    let u = slice.select(ChannelSelector::Uncertainty)?;
    let mid_y = 0.5 * (ws.min[1] + ws.max[1]);
    let cam = spec.camera_pose.position;
    let t = &spec.table;
    let (mut back, mut nb, mut front, mut nf) = (0.0, 0usize, 0.0, 0usize);
    for (i, c) in slice.centres().iter().enumerate() {
        let q = [c[0], c[1], z];
        let on_table = (t.min[0]..=t.max[0]).contains(&q[0]) && (t.min[1]..=t.max[1]).contains(&q[1]);
        if !on_table || oracle.occupied(q) {
            continue;
        }
        let d = [q[0] - cam[0], q[1] - cam[1], q[2] - cam[2]];
        let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let dir = d.map(|v| v / dist);
        let hidden = oracle.cast(cam, dir).is_some_and(|(hit, _)| hit < dist - 1e-9);
        if hidden && q[1] > mid_y {
            back += u[i];
            nb += 1;
        } else if !hidden && q[1] <= mid_y {
            front += u[i];
            nf += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
    Ok((mean(back, nb), mean(front, nf), nb, nf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::SceneSpec;

    #[test]
    fn region_spans_table_and_workspace_top() {
        let spec = SceneSpec::random_tabletop(3, 5, 1).unwrap();
        let oracle = spec.oracle().unwrap();
        let r = tabletop_region(&spec, &oracle).unwrap();
        assert_eq!(r.min, vec![-0.4, -0.3, -0.05]);
        assert_eq!(r.max[2], oracle.workspace().max[2]);
    }

    #[test]
    fn labelled_grid_marks_table_cells() {
        let spec = SceneSpec::random_tabletop(2, 3, 4).unwrap();
        let oracle = spec.oracle().unwrap();
        let r = tabletop_region(&spec, &oracle).unwrap();
        let (res, pts, truth) = labelled_grid(&oracle, &r, 0.05).unwrap();
        assert_eq!(pts.len(), res.iter().product::<usize>());
        // The lowest layer of cell centres lies inside the slab.
        assert!(truth[..res[0] * res[1]].iter().all(|&c| c == 2));
        assert!(truth.contains(&1));
    }

    #[test]
    fn bad_voxel_is_rejected() {
        let spec = SceneSpec::random_tabletop(1, 2, 0).unwrap();
        let oracle = spec.oracle().unwrap();
        let r = tabletop_region(&spec, &oracle).unwrap();
        assert!(labelled_grid(&oracle, &r, 0.0).is_err());
    }
}
