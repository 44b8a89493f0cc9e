//! CARMEN laser logs (`FLASER` records).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::geometry::Points;
use crate::sampling::{ray_samples, LabeledDataset};

/// Readings at or beyond this range are treated as "no return".
pub const DEFAULT_MAX_RANGE: f64 = 81.9;
/// Field of view assumed for `FLASER` records.
pub const DEFAULT_FOV: f64 = std::f64::consts::PI;

/// One planar laser scan taken from `pose = (x, y, theta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub pose: [f64; 3],
    pub ranges: Vec<f64>,
    pub fov: f64,
    pub max_range: f64,
}

impl LaserScan {
    /// Bearing of beam `j` in the world frame.
    pub fn beam_angle(&self, j: usize) -> f64 {
        let n = self.ranges.len();
        let offset = if n > 1 { j as f64 * self.fov / (n - 1) as f64 } else { 0.5 * self.fov };
        self.pose[2] - 0.5 * self.fov + offset
    }

    pub fn is_valid(&self, j: usize) -> bool {
        let r = self.ranges[j];
        r.is_finite() && r > 0.0 && r < self.max_range
    }

    pub fn valid_count(&self) -> usize {
        (0..self.ranges.len()).filter(|&j| self.is_valid(j)).count()
    }

    /// World-frame hit points of the valid beams.
    pub fn endpoints(&self) -> Points {
        let mut pts = Points::with_capacity(2, self.ranges.len());
        for j in 0..self.ranges.len() {
            if self.is_valid(j) {
                let a = self.beam_angle(j);
                let r = self.ranges[j];
                pts.push(&[self.pose[0] + r * a.cos(), self.pose[1] + r * a.sin()]);
            }
        }
        pts
    }
}

/// Reads every `FLASER` line of a log with the default FOV and max range.
pub fn parse_carmen_log(path: &Path) -> Result<Vec<LaserScan>> {
    let text = std::fs::read_to_string(path)?;
    parse_carmen_str(&text, DEFAULT_FOV, DEFAULT_MAX_RANGE)
}

pub fn parse_carmen_str(text: &str, fov: f64, max_range: f64) -> Result<Vec<LaserScan>> {
    let mut scans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("FLASER") {
            continue;
        }
        let rest: Vec<&str> = tokens.collect();
        let perr = |message: String| Error::Parse { line: lineno, message };
        let n: usize = rest
            .first()
            .ok_or_else(|| perr("FLASER without a beam count".into()))?
            .parse()
            .map_err(|_| perr(format!("bad beam count {:?}", rest[0])))?;
        if rest.len() != n + 10 {
            return Err(perr(format!("expected {} tokens after FLASER for {n} beams, found {}", n + 10, rest.len())));
        }
        if n == 0 {
            continue;
        }
        let num = |k: usize| -> Result<f64> {
            rest[k].parse::<f64>().map_err(|_| perr(format!("token {} ({:?}) is not a number", k + 1, rest[k])))
        };
        let mut ranges = Vec::with_capacity(n);
        for k in 1..=n {
            let r = num(k)?;
            if r < 0.0 {
                return Err(perr(format!("negative range {r}")));
            }
            ranges.push(r);
        }
        let pose = [num(n + 1)?, num(n + 2)?, num(n + 3)?];
        scans.push(LaserScan { pose, ranges, fov, max_range });
    }
    Ok(scans)
}

/// Serialises scans back to `FLASER` lines (odometry copied from the pose).
pub fn write_carmen(scans: &[LaserScan]) -> String {
    let mut out = String::new();
    for (i, s) in scans.iter().enumerate() {
        let _ = write!(out, "FLASER {}", s.ranges.len());
        for r in &s.ranges {
            let _ = write!(out, " {r}");
        }
        let [x, y, t] = s.pose;
        let ts = i as f64;
        let _ = writeln!(out, " {x} {y} {t} {x} {y} {t} {ts} contramap {ts}");
    }
    out
}

/// Turns scans into occupied hits plus free samples along each beam.
///
/// Every `stride`-th scan is used. Beam jitter is seeded per scan.
pub fn scans_to_dataset(scans: &[LaserScan], step: f64, stride: usize, seed: u64) -> Result<LabeledDataset> {
    if stride == 0 {
        return param("scan stride must be positive");
    }
    let mut points = Points::new(2);
    let mut labels = Vec::new();
    for (k, s) in scans.iter().enumerate().step_by(stride) {
        let hits = s.endpoints();
        let sub = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64);
        let (p, l) = ray_samples(&s.pose[..2], &hits, step, sub)?;
        points.extend(&p);
        labels.extend(l);
    }
    if points.is_empty() {
        return Err(Error::Input("log contains no valid laser returns".into()));
    }
    LabeledDataset::new(points, labels, 2)
}
