//! Spatial primitives and the RBF feature map.
//!
//! A map is parameterised over a fixed set of kernel centres ("hinges").
//! Every query coordinate is projected onto the Gaussian responses of all
//! hinges, followed by a constant bias entry, and the downstream linear
//! models only ever see that feature vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, param, Error, Result};

/// Hinges closer than this are treated as the same point.
pub const HINGE_MERGE_TOLERANCE: f64 = 1e-9;

/// A flat list of `dim`-dimensional coordinates.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self { dim, coords: Vec::with_capacity(dim * n) }
    }

    /// Wraps a row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return param("point dimension must be positive");
        }
        if coords.len() % dim != 0 {
            return input(format!(
                "coordinate buffer of length {} is not a multiple of dimension {dim}",
                coords.len()
            ));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut pts = Self::with_capacity(dim, rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return input(format!("point {i} has dimension {}, expected {dim}", r.len()));
            }
            pts.coords.extend_from_slice(r);
        }
        Ok(pts)
    }

    /// Appends a point. Panics if the dimension is wrong.
    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point dimension mismatch");
        self.coords.extend_from_slice(p);
    }

    pub fn extend(&mut self, other: &Points) {
        assert_eq!(other.dim, self.dim, "point dimension mismatch");
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    /// Selects the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.coords.extend_from_slice(self.get(i));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() || self.min.is_empty() {
            return param("bounds min/max must have the same non-zero dimension");
        }
        for (a, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return param(format!("bounds axis {a} is not finite"));
            }
            if lo > hi {
                return param(format!("bounds axis {a}: min {lo} > max {hi}"));
            }
        }
        Ok(())
    }

    /// Tight box around a non-empty point set.
    pub fn enclosing(points: &Points) -> Result<Self> {
        if points.is_empty() {
            return input("cannot bound an empty point set");
        }
        let d = points.dim();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for p in points.iter() {
            for a in 0..d {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Self::new(min, max)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.extent(a)).product()
    }

    pub fn centre(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Projects `p` onto the box.
    pub fn clamp(&self, p: &mut [f64]) {
        for (v, (lo, hi)) in p.iter_mut().zip(self.min.iter().zip(&self.max)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            min: self.min.iter().zip(&other.min).map(|(a, b)| a.min(*b)).collect(),
            max: self.max.iter().zip(&other.max).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    pub fn expanded(&self, margin: f64) -> Bounds {
        Bounds {
            min: self.min.iter().map(|v| v - margin).collect(),
            max: self.max.iter().map(|v| v + margin).collect(),
        }
    }
}

/// Kernel centres plus the shared Gaussian bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeSet {
    points: Points,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct HingeSetRepr {
    dim: usize,
    gamma: f64,
    points: Vec<Vec<f64>>,
}

impl Serialize for HingeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HingeSetRepr { dim: self.dim(), gamma: self.gamma, points: self.points.to_rows() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HingeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = HingeSetRepr::deserialize(d)?;
        let points = Points::from_rows(repr.dim, &repr.points).map_err(serde::de::Error::custom)?;
        HingeSet::new(points, repr.gamma).map_err(serde::de::Error::custom)
    }
}

impl HingeSet {
    /// Validates bandwidth, dimension and pairwise distinctness.
    pub fn new(points: Points, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return param(format!("gamma must be positive and finite, got {gamma}"));
        }
        if !(2..=3).contains(&points.dim()) {
            return param(format!("hinge dimension must be 2 or 3, got {}", points.dim()));
        }
        if points.is_empty() {
            return input("hinge set is empty");
        }
        if !points.all_finite() {
            return input("hinge coordinates must be finite");
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points.get(a).partial_cmp(points.get(b)).unwrap());
        for w in order.windows(2) {
            if points.get(w[0]) == points.get(w[1]) {
                return input(format!("duplicate hinge at {:?}", points.get(w[0])));
            }
        }
        Ok(Self { points, gamma })
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Number of kernel centres H.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Feature width: one response per hinge plus the bias entry.
    pub fn feature_width(&self) -> usize {
        self.len() + 1
    }

    /// Fills `out` (length H+1) with the feature vector of `x`.
    pub fn feature_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.feature_width());
        let (kernels, bias) = out.split_at_mut(self.len());
        for (k, h) in kernels.iter_mut().zip(self.points.iter()) {
            *k = (-self.gamma * squared_distance(x, h)).exp();
        }
        bias[0] = 1.0;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Default bandwidth for lattice hinges: neighbours overlap at e^{-1/2}.
pub fn default_gamma(spacing: f64) -> f64 {
    1.0 / (2.0 * spacing * spacing)
}

fn lattice_axis_count(min: f64, max: f64, spacing: f64) -> usize {
    // floor(extent/spacing)+1, corrected so that it agrees with the
    // "min + i*spacing <= max" enumeration under rounding.
    let mut n = ((max - min) / spacing).floor() as usize + 1;
    while n > 1 && min + (n - 1) as f64 * spacing > max {
        n -= 1;
    }
    while min + (n as f64) * spacing <= max {
        n += 1;
    }
    n
}

/// Number of hinges `grid_hinges` would produce.
pub fn grid_hinge_count(bounds: &Bounds, spacing: f64) -> usize {
    (0..bounds.dim())
        .map(|a| lattice_axis_count(bounds.min[a], bounds.max[a], spacing))
        .product()
}

/// Regular lattice of hinges anchored at `bounds.min`, first axis fastest.
pub fn grid_hinges(bounds: &Bounds, spacing: f64, gamma: f64) -> Result<HingeSet> {
    bounds.validate()?;
    if !(spacing > 0.0 && spacing.is_finite()) {
        return param(format!("hinge spacing must be positive, got {spacing}"));
    }
    if !(gamma > 0.0) {
        return param(format!("gamma must be positive, got {gamma}"));
    }
    let d = bounds.dim();
    let counts: Vec<usize> =
        (0..d).map(|a| lattice_axis_count(bounds.min[a], bounds.max[a], spacing)).collect();
    let total: usize = counts.iter().product();
    let mut pts = Points::with_capacity(d, total);
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    for _ in 0..total {
        for a in 0..d {
            p[a] = bounds.min[a] + idx[a] as f64 * spacing;
        }
        pts.push(&p);
        for a in 0..d {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    HingeSet::new(pts, gamma)
}

/// Largest lattice spacing whose hinge count is closest to `target`.
pub fn solve_grid_spacing(bounds: &Bounds, target: usize) -> Result<f64> {
    bounds.validate()?;
    if target == 0 {
        return param("target hinge count must be positive");
    }
    let max_extent = (0..bounds.dim()).map(|a| bounds.extent(a)).fold(0.0, f64::max);
    if max_extent <= 0.0 {
        return param("bounds have zero extent on every axis");
    }
    // count(s) is non-increasing in s; bisect for sup{s : count(s) >= target}.
    let mut lo = max_extent * 1e-6;
    let mut hi = max_extent * 2.0;
    if grid_hinge_count(bounds, lo) < target {
        return param(format!("target hinge count {target} is too large for these bounds"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if grid_hinge_count(bounds, mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let below = grid_hinge_count(bounds, lo);
    let above = grid_hinge_count(bounds, hi);
    if above.abs_diff(target) < below.abs_diff(target) {
        Ok(hi)
    } else {
        Ok(lo)
    }
}

/// Hinges jittered around randomly chosen surface points.
///
/// `count` candidates are drawn with replacement, each offset by isotropic
/// Gaussian noise, then candidates within [`HINGE_MERGE_TOLERANCE`] of an
/// earlier one are dropped.
pub fn near_surface_hinges(
    surface: &Points,
    count: usize,
    jitter_sigma: f64,
    gamma: f64,
    seed: u64,
) -> Result<HingeSet> {
    if surface.is_empty() {
        return input("near-surface hinge generation needs at least one surface point");
    }
    if count == 0 {
        return param("hinge count must be positive");
    }
    if !(jitter_sigma >= 0.0) {
        return param(format!("jitter sigma must be non-negative, got {jitter_sigma}"));
    }
    let d = surface.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cand = Points::with_capacity(d, count);
    let mut p = vec![0.0; d];
    for _ in 0..count {
        let src = surface.get(rng.random_range(0..surface.len()));
        for a in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            p[a] = src[a] + jitter_sigma * z;
        }
        cand.push(&p);
    }
    HingeSet::new(dedup_points(&cand, HINGE_MERGE_TOLERANCE), gamma)
}

/// Drops every point within `tol` of an earlier-indexed kept point.
pub(crate) fn dedup_points(points: &Points, tol: f64) -> Points {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points.get(a)[0].partial_cmp(&points.get(b)[0]).unwrap().then(a.cmp(&b)));
    let mut removed = vec![false; n];
    let tol2 = tol * tol;
    for (pos, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        let xi = points.get(i);
        for &j in &order[pos + 1..] {
            let xj = points.get(j);
            if xj[0] - xi[0] > tol {
                break;
            }
            if !removed[j] && squared_distance(xi, xj) < tol2 {
                removed[i.max(j)] = true;
            }
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    points.select(&keep)
}

/// Dense row-major matrix of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return input(format!("feature buffer has {} values, expected {rows}x{cols}", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix { rows: idx.len(), cols: self.cols, data }
    }
}

/// Projects every query onto the hinge kernels. Column H is the bias (1).
pub fn rbf_features(queries: &Points, hinges: &HingeSet) -> Result<FeatureMatrix> {
    if !queries.is_empty() && queries.dim() != hinges.dim() {
        return Err(Error::Input(format!(
            "query dimension {} does not match hinge dimension {}",
            queries.dim(),
            hinges.dim()
        )));
    }
    let cols = hinges.feature_width();
    let mut data = vec![0.0; queries.len() * cols];
    for (x, out) in queries.iter().zip(data.chunks_exact_mut(cols)) {
        hinges.feature_into(x, out);
    }
    Ok(FeatureMatrix { rows: queries.len(), cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(lo: f64, hi: f64) -> Bounds {
        Bounds::new(vec![lo, lo], vec![hi, hi]).unwrap()
    }

    #[test]
    fn inclusive_lattice() {
        let h = grid_hinges(&square(0.0, 10.0), 5.0, 1.0).unwrap();
        assert_eq!(h.len(), 9);
        let mut rows = h.points().to_rows();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = Vec::new();
        for x in [0.0, 5.0, 10.0] {
            for y in [0.0, 5.0, 10.0] {
                want.push(vec![x, y]);
            }
        }
        assert_eq!(rows, want);
    }

    #[test]
    fn oversized_spacing_keeps_origin() {
        let h = grid_hinges(&square(0.0, 10.0), 20.0, 1.0).unwrap();
        assert_eq!(h.points().to_rows(), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(matches!(grid_hinges(&square(0.0, 1.0), 0.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(grid_hinges(&square(0.0, 1.0), -1.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(grid_hinges(&square(0.0, 1.0), 0.5, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn intel_extent_solves_to_5600_kernels() {
        // Commonly used extents of the Intel lab map: x in [-20, 20], y in [-25, 10].
        let b = Bounds::new(vec![-20.0, -25.0], vec![20.0, 10.0]).unwrap();
        let s = solve_grid_spacing(&b, 5600).unwrap();
        assert_eq!(grid_hinge_count(&b, s), 5600);
        assert_eq!(grid_hinges(&b, s, default_gamma(s)).unwrap().len(), 5600);
    }

    #[test]
    fn near_surface_single_point_zero_jitter() {
        let pts = Points::from_rows(2, &[[1.0, 2.0]]).unwrap();
        let h = near_surface_hinges(&pts, 3, 0.0, 1.0, 7).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.points().get(0), &[1.0, 2.0]);
    }

    #[test]
    fn near_surface_hinges_stay_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let surf = Points::from_rows(3, &rows).unwrap();
        let h = near_surface_hinges(&surf, 100, 0.05, 1.0, 11).unwrap();
        assert_eq!(h.len(), 100);
        let worst = h
            .points()
            .iter()
            .map(|p| surf.iter().map(|s| distance(p, s)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        assert!(worst <= 0.25, "max distance {worst}");
        assert_eq!(h, near_surface_hinges(&surf, 100, 0.05, 1.0, 11).unwrap());
    }

    #[test]
    fn near_surface_rejects_empty() {
        assert!(matches!(
            near_surface_hinges(&Points::new(2), 3, 0.1, 1.0, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn kernel_values() {
        let h = HingeSet::new(Points::from_rows(2, &[[0.0, 0.0], [1.0, 0.0]]).unwrap(), 1.0).unwrap();
        let q = Points::from_rows(2, &[[0.0, 0.0]]).unwrap();
        let f = rbf_features(&q, &h).unwrap();
        assert_eq!(f.row(0)[0], 1.0);
        assert!((f.row(0)[1] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((f.row(0)[1] - 0.367879).abs() < 1e-6);
        assert_eq!(f.row(0)[2], 1.0);
    }

    #[test]
    fn features_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hrows: Vec<[f64; 3]> = (0..20).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let qrows: Vec<[f64; 3]> = (0..50).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let gamma = 3.7;
        let h = HingeSet::new(Points::from_rows(3, &hrows).unwrap(), gamma).unwrap();
        let f = rbf_features(&Points::from_rows(3, &qrows).unwrap(), &h).unwrap();
        for (i, q) in qrows.iter().enumerate() {
            for (j, c) in hrows.iter().enumerate() {
                let mut s = 0.0;
                for a in 0..3 {
                    s += (q[a] - c[a]).powi(2);
                }
                let want = (-gamma * s).exp();
                assert!(((f.row(i)[j] - want) / want).abs() <= 1e-12);
            }
            assert_eq!(f.row(i)[20], 1.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let h = HingeSet::new(Points::from_rows(2, &[[0.0, 0.0]]).unwrap(), 1.0).unwrap();
        let q = Points::from_rows(3, &[[0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(rbf_features(&q, &h), Err(Error::Input(_))));
    }

    #[test]
    fn hinge_set_rejects_duplicates() {
        let p = Points::from_rows(2, &[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(HingeSet::new(p, 1.0).is_err());
    }

    prop_compose! {
        fn arb_hinges()(rows in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..12),
                        gamma in 0.01f64..10.0) -> HingeSet {
            let pts = dedup_points(&Points::from_rows(2, &rows).unwrap(), 1e-9);
            HingeSet::new(pts, gamma).unwrap()
        }
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(h in arb_hinges()) {
            let back = HingeSet::from_json(&h.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.gamma().to_bits(), h.gamma().to_bits());
            for (a, b) in back.points().as_flat().iter().zip(h.points().as_flat()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn kernel_in_unit_interval(h in arb_hinges(), x in prop::array::uniform2(-6.0f64..6.0)) {
            let f = rbf_features(&Points::from_rows(2, &[x]).unwrap(), &h).unwrap();
            for (j, c) in h.points().iter().enumerate() {
                let k = f.row(0)[j];
                prop_assert!(k <= 1.0 && k >= 0.0);
                if c == x.as_slice() { prop_assert_eq!(k, 1.0); }
                if squared_distance(c, &x) * h.gamma() < 700.0 { prop_assert!(k > 0.0); }
                if c != x.as_slice() && squared_distance(c, &x) * h.gamma() > 1e-15 { prop_assert!(k < 1.0); }
            }
        }

        #[test]
        fn permuting_hinges_permutes_columns(h in arb_hinges(), x in prop::array::uniform2(-6.0f64..6.0), seed in 0u64..1000) {
            let n = h.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..n).rev() { perm.swap(i, rng.random_range(0..=i)); }
            let hp = HingeSet::new(h.points().select(&perm), h.gamma()).unwrap();
            let q = Points::from_rows(2, &[x]).unwrap();
            let f = rbf_features(&q, &h).unwrap();
            let fp = rbf_features(&q, &hp).unwrap();
            for (k, &p) in perm.iter().enumerate() {
                prop_assert_eq!(fp.row(0)[k].to_bits(), f.row(0)[p].to_bits());
            }
            prop_assert_eq!(fp.row(0)[n], 1.0);
        }

        #[test]
        fn lattice_count_matches_enumeration(
            lo in prop::array::uniform2(-10.0f64..10.0),
            ext in prop::array::uniform2(0.0f64..20.0),
            spacing in 0.1f64..7.0,
        ) {
            let b = Bounds::new(lo.to_vec(), vec![lo[0] + ext[0], lo[1] + ext[1]]).unwrap();
            let mut want = 1usize;
            for a in 0..2 {
                let mut i = 0usize;
                while b.min[a] + i as f64 * spacing <= b.max[a] { i += 1; }
                want *= i;
            }
            prop_assert_eq!(grid_hinges(&b, spacing, 1.0).unwrap().len(), want);
            let formula: usize = (0..2).map(|a| (b.extent(a) / spacing).floor() as usize + 1).product();
            prop_assert_eq!(formula, want);
        }
    }
}
