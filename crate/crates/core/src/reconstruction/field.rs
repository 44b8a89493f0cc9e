//! Dense model queries on regular grids.

use serde::{Deserialize, Serialize};

use crate::classifier::{occupancy_from_free, occupancy_probability, predict, SoftmaxMapModel};
use crate::error::{input, param, Result};
use crate::geometry::{Bounds, Points};
use crate::sampling::{FREE, OCCUPIED};

/// Rows predicted per feature batch.
const QUERY_CHUNK: usize = 8192;

/// Per-cell class probabilities, first axis fastest.
///
/// Each cell stores the C known-class probabilities followed by the uncertainty channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub bounds: Bounds,
    pub resolution: Vec<usize>,
    pub channels: usize,
    pub values: Vec<f64>,
}

/// Which scalar a raster or mesh reads from a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "channel", rename_all = "snake_case")]
pub enum ChannelSelector {
    /// Raw probability of one 1-based class.
    Class { label: u32 },
    /// `p_occ / (p_occ + p_free)` for binary maps.
    Occupancy,
    /// Probability of "not free" among the known classes.
    NotFree,
    Uncertainty,
}

impl ChannelSelector {
    pub fn name(&self) -> String {
        match self {
            ChannelSelector::Class { label } => format!("class_{label}"),
            ChannelSelector::Occupancy => "occupancy".into(),
            ChannelSelector::NotFree => "occupied".into(),
            ChannelSelector::Uncertainty => "uncertainty".into(),
        }
    }

    /// Scalar value of one prediction row.
    pub fn apply(&self, row: &[f64]) -> Result<f64> {
        let k = row.len();
        let known = k as u32 - 1;
        match *self {
            ChannelSelector::Class { label } if label >= 1 && label as usize <= k => Ok(row[label as usize - 1]),
            ChannelSelector::Class { label } => input(format!("class {label} outside 1..={k}")),
            ChannelSelector::Occupancy if known == 2 => Ok(occupancy_probability(row, OCCUPIED, FREE)),
            ChannelSelector::Occupancy => input("the occupancy ratio needs a binary free/occupied model"),
            ChannelSelector::NotFree => Ok(occupancy_from_free(row, FREE, known)),
            ChannelSelector::Uncertainty => Ok(row[k - 1]),
        }
    }
}

fn check_resolution(bounds: &Bounds, resolution: &[usize], min: usize) -> Result<()> {
    bounds.validate()?;
    if resolution.len() != bounds.dim() {
        return param(format!("resolution has {} axes, bounds have {}", resolution.len(), bounds.dim()));
    }
    if let Some(r) = resolution.iter().find(|&&r| r < min) {
        return param(format!("grid resolution must be at least {min} per axis, got {r}"));
    }
    Ok(())
}

/// Grid nodes `min + i * extent / (n - 1)` or cell centres `min + (i + 0.5) * extent / n`.
pub(crate) fn lattice(bounds: &Bounds, resolution: &[usize], centres: bool) -> Points {
    let d = bounds.dim();
    let total: usize = resolution.iter().product();
    let mut pts = Points::with_capacity(d, total);
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    for _ in 0..total {
        for a in 0..d {
            let n = resolution[a];
            p[a] = if centres {
                bounds.min[a] + (idx[a] as f64 + 0.5) * bounds.extent(a) / n as f64
            } else {
                bounds.min[a] + idx[a] as f64 * bounds.extent(a) / (n - 1) as f64
            };
        }
        pts.push(&p);
        for (a, i) in idx.iter_mut().enumerate() {
            *i += 1;
            if *i < resolution[a] {
                break;
            }
            *i = 0;
        }
    }
    pts
}

/// Class probabilities for every query, predicted in fixed-size batches.
pub(crate) fn predict_chunked(model: &SoftmaxMapModel, queries: &Points) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(queries.len() * model.num_outputs());
    let flat = queries.as_flat();
    let d = queries.dim();
    for chunk in flat.chunks(QUERY_CHUNK * d) {
        let pts = Points::from_flat(d, chunk.to_vec())?;
        out.extend_from_slice(predict(model, &pts)?.as_slice());
    }
    Ok(out)
}

impl ScalarField {
    /// Evaluates the model at cell centres.
    pub fn query_grid(model: &SoftmaxMapModel, bounds: &Bounds, resolution: &[usize]) -> Result<Self> {
        check_resolution(bounds, resolution, 2)?;
        if bounds.dim() != model.hinges().dim() {
            return input(format!("{}D bounds for a {}D model", bounds.dim(), model.hinges().dim()));
        }
        let pts = lattice(bounds, resolution, true);
        Ok(Self {
            bounds: bounds.clone(),
            resolution: resolution.to_vec(),
            channels: model.num_outputs(),
            values: predict_chunked(model, &pts)?,
        })
    }

    /// A 2D field over the first two axes of a 3D model, at height `z`.
    pub fn query_slice(model: &SoftmaxMapModel, bounds: &Bounds, z: f64, resolution: [usize; 2]) -> Result<Self> {
        if bounds.dim() != 3 || model.hinges().dim() != 3 {
            return input("slices are taken through 3D models");
        }
        let plane = Bounds::new(bounds.min[..2].to_vec(), bounds.max[..2].to_vec())?;
        check_resolution(&plane, &resolution, 2)?;
        let grid = lattice(&plane, &resolution, true);
        let mut pts = Points::with_capacity(3, grid.len());
        for p in grid.iter() {
            pts.push(&[p[0], p[1], z]);
        }
        Ok(Self { bounds: plane, resolution: resolution.to_vec(), channels: model.num_outputs(), values: predict_chunked(model, &pts)? })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn num_cells(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    /// Linear cell index of per-axis indices.
    pub fn index(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for a in (0..idx.len()).rev() {
            k = k * self.resolution[a] + idx[a];
        }
        k
    }

    /// Cell-centre coordinates in the same order as the cells.
    pub fn centres(&self) -> Points {
        lattice(&self.bounds, &self.resolution, true)
    }

    /// One scalar per cell.
    pub fn select(&self, selector: ChannelSelector) -> Result<Vec<f64>> {
        (0..self.num_cells()).map(|i| selector.apply(self.cell(i))).collect()
    }

    /// Most probable known class per cell.
    pub fn argmax_known(&self) -> Vec<u32> {
        (0..self.num_cells())
            .map(|i| {
                let c = &self.cell(i)[..self.channels - 1];
                let mut best = 0;
                for k in 1..c.len() {
                    if c[k] > c[best] {
                        best = k;
                    }
                }
                best as u32 + 1
            })
            .collect()
    }
}

/// Scalar samples at the nodes of a 3D grid, x fastest, for isosurface extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerField {
    pub bounds: Bounds,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl CornerField {
    pub fn from_fn(bounds: &Bounds, dims: [usize; 3], f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        if bounds.dim() != 3 {
            return input("corner fields are three-dimensional");
        }
        check_resolution(bounds, &dims, 2)?;
        let values = lattice(bounds, &dims, false).iter().map(|p| f([p[0], p[1], p[2]])).collect();
        Ok(Self { bounds: bounds.clone(), dims, values })
    }

    /// Model channel sampled at grid nodes.
    pub fn from_model(model: &SoftmaxMapModel, bounds: &Bounds, dims: [usize; 3], selector: ChannelSelector) -> Result<Self> {
        if bounds.dim() != 3 || model.hinges().dim() != 3 {
            return input("corner fields are sampled from 3D models");
        }
        check_resolution(bounds, &dims, 2)?;
        let probs = predict_chunked(model, &lattice(bounds, &dims, false))?;
        let values = probs.chunks_exact(model.num_outputs()).map(|r| selector.apply(r)).collect::<Result<_>>()?;
        Ok(Self { bounds: bounds.clone(), dims, values })
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.bounds.extent(a) / (self.dims[a] - 1) as f64)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let s = self.spacing();
        [
            self.bounds.min[0] + i as f64 * s[0],
            self.bounds.min[1] + j as f64 * s[1],
            self.bounds.min[2] + k as f64 * s[2],
        ]
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.dims[1] + j) * self.dims[0] + i]
    }

    /// Trilinear interpolation, clamped to the grid.
    pub fn trilinear(&self, p: [f64; 3]) -> f64 {
        let s = self.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let g = ((p[a] - self.bounds.min[a]) / s[a]).clamp(0.0, (self.dims[a] - 1) as f64);
            let i = (g.floor() as usize).min(self.dims[a] - 2);
            base[a] = i;
            frac[a] = g - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if o[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
            acc += w * self.value(base[0] + o[0], base[1] + o[1], base[2] + o[2]);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HingeSet;

    fn model2d() -> SoftmaxMapModel {
        let h = HingeSet::new(Points::from_rows(2, &[[0.2, 0.2], [0.8, 0.6]]).unwrap(), 4.0).unwrap();
        let mut m = SoftmaxMapModel::zeros(h, 2).unwrap();
        for (i, w) in m.params_mut().iter_mut().enumerate() {
            *w = ((i * 7) % 5) as f64 * 0.3 - 0.6;
        }
        m
    }

    fn unit() -> Bounds {
        Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn two_by_two_cell_centres() {
        let f = ScalarField::query_grid(&model2d(), &unit(), &[2, 2]).unwrap();
        assert_eq!(f.centres().to_rows(), vec![vec![0.25, 0.25], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.75, 0.75]]);
    }

    #[test]
    fn field_rows_match_predict_and_sum_to_one() {
        let m = model2d();
        let f = ScalarField::query_grid(&m, &unit(), &[7, 5]).unwrap();
        let direct = predict(&m, &f.centres()).unwrap();
        assert_eq!(direct.as_slice(), f.values.as_slice());
        for i in 0..f.num_cells() {
            assert!((f.cell(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let again = ScalarField::query_grid(&m, &unit(), &[7, 5]).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn rejects_low_resolution_and_wrong_dimension() {
        let m = model2d();
        assert!(matches!(ScalarField::query_grid(&m, &unit(), &[1, 4]), Err(crate::Error::Parameter(_))));
        let b3 = Bounds::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(ScalarField::query_grid(&m, &b3, &[2, 2, 2]), Err(crate::Error::Input(_))));
    }

    #[test]
    fn selectors() {
        let row = [0.2, 0.6, 0.2];
        assert_eq!(ChannelSelector::Uncertainty.apply(&row).unwrap(), 0.2);
        assert_eq!(ChannelSelector::Class { label: 2 }.apply(&row).unwrap(), 0.6);
        assert!((ChannelSelector::Occupancy.apply(&row).unwrap() - 0.75).abs() < 1e-15);
        assert!(ChannelSelector::Class { label: 4 }.apply(&row).is_err());
        assert!(ChannelSelector::Occupancy.apply(&[0.2, 0.3, 0.3, 0.2]).is_err());
    }

    #[test]
    fn trilinear_reproduces_linear_functions() {
        let b = Bounds::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 4.0]).unwrap();
        let f = CornerField::from_fn(&b, [5, 4, 6], |p| 2.0 * p[0] - p[1] + 0.5 * p[2]).unwrap();
        for p in [[0.3, 1.7, 2.2], [-1.0, 0.0, 2.0], [1.0, 3.0, 4.0]] {
            assert!((f.trilinear(p) - (2.0 * p[0] - p[1] + 0.5 * p[2])).abs() < 1e-12);
        }
    }
}
