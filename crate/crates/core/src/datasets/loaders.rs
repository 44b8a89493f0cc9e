//! Labelled point clouds from CSV or PLY files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::geometry::Points;
use crate::ply;
use crate::sampling::LabeledDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFormat {
    Csv,
    Ply,
}

impl PointFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" | "txt" => Some(PointFormat::Csv),
            "ply" => Some(PointFormat::Ply),
            _ => None,
        }
    }
}

/// Loads `x,y[,z],label` points. `C` is taken as the largest label present.
pub fn load_labeled_points(path: &Path, format: PointFormat) -> Result<LabeledDataset> {
    let (points, labels) = match format {
        PointFormat::Csv => read_csv(&std::fs::read_to_string(path)?)?,
        PointFormat::Ply => read_ply(path)?,
    };
    build(points, labels)
}

fn build(points: Points, labels: Vec<u32>) -> Result<LabeledDataset> {
    if points.is_empty() {
        return input("point file contains no rows");
    }
    let c = *labels.iter().max().unwrap();
    LabeledDataset::new(points, labels, c)
}

fn parse_label(v: f64, row: usize) -> Result<u32> {
    if v.fract() != 0.0 || !v.is_finite() {
        return input(format!("row {row}: label {v} is not an integer"));
    }
    if v < 1.0 {
        return input(format!("row {row}: label {v} must be at least 1 (labels are 1-based)"));
    }
    if v > u32::MAX as f64 {
        return input(format!("row {row}: label {v} is too large"));
    }
    Ok(v as u32)
}

pub(crate) fn read_csv(text: &str) -> Result<(Points, Vec<u32>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let mut label_col = None;
    let mut dim = None;
    if let Some((_, first)) = lines.peek() {
        let cells: Vec<&str> = first.split(',').map(str::trim).collect();
        if cells.iter().any(|c| c.parse::<f64>().is_err()) {
            let col = cells
                .iter()
                .position(|c| c.eq_ignore_ascii_case("label"))
                .ok_or_else(|| Error::Input("CSV header has no label column".into()))?;
            label_col = Some(col);
            dim = Some(cells.len() - 1);
            lines.next();
        }
    }
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut row_buf = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        row_buf.clear();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("row {row}: {:?} is not a number", cell.trim())))?;
            row_buf.push(v);
        }
        let d = *dim.get_or_insert(row_buf.len().saturating_sub(1));
        if row_buf.len() != d + 1 || d < 2 {
            return input(format!("row {row}: expected {} coordinates plus a label column", d.max(2)));
        }
        let lc = label_col.unwrap_or(d);
        for (k, &v) in row_buf.iter().enumerate() {
            if k == lc {
                labels.push(parse_label(v, row)?);
            } else {
                if !v.is_finite() {
                    return input(format!("row {row}: non-finite coordinate"));
                }
                coords.push(v);
            }
        }
    }
    let d = dim.unwrap_or(2);
    if d > 3 {
        return input(format!("points must be 2D or 3D, found {d} coordinates"));
    }
    Ok((Points::from_flat(d, coords)?, labels))
}

fn read_ply(path: &Path) -> Result<(Points, Vec<u32>)> {
    let t = ply::read_vertices(path)?;
    let lc = t.column("label").ok_or_else(|| Error::Input("PLY vertices have no label property".into()))?;
    let axes: Vec<usize> = ["x", "y", "z"].iter().filter_map(|n| t.column(n)).collect();
    if axes.len() < 2 || t.column("x").is_none() || t.column("y").is_none() {
        return input("PLY vertices need x and y properties");
    }
    let dim = axes.len();
    let mut coords = Vec::with_capacity(t.rows.len() * dim);
    let mut labels = Vec::with_capacity(t.rows.len());
    for (i, r) in t.rows.iter().enumerate() {
        for &a in &axes {
            if !r[a].is_finite() {
                return input(format!("vertex {i}: non-finite coordinate"));
            }
            coords.push(r[a]);
        }
        labels.push(parse_label(r[lc], i + 1)?);
    }
    Ok((Points::from_flat(dim, coords)?, labels))
}

/// Writes a dataset as binary PLY (2D points get `z = 0`).
pub fn write_labeled_ply(data: &LabeledDataset, path: &Path) -> Result<()> {
    let coords: Vec<[f64; 3]> = data
        .points
        .iter()
        .map(|p| [p[0], p[1], if p.len() > 2 { p[2] } else { 0.0 }])
        .collect();
    ply::write_labeled_vertices(path, &coords, &data.labels)
}
