//! Occupancy bitmaps and a planar laser simulator, used when no real log is at hand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::carmen::{LaserScan, DEFAULT_FOV};
use crate::error::{param, Result};
use crate::geometry::Bounds;

/// Row-major occupancy bitmap; row 0 is the southern edge.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorPlan {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    cells: Vec<bool>,
}

impl FloorPlan {
    /// A plan that is solid everywhere; free space is carved out afterwards.
    pub fn solid(width_m: f64, height_m: f64, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && width_m > 0.0 && height_m > 0.0) {
            return param("floor plan size and resolution must be positive");
        }
        let width = (width_m / resolution).round() as usize;
        let height = (height_m / resolution).round() as usize;
        Ok(Self { width, height, resolution, origin: [0.0, 0.0], cells: vec![true; width * height] })
    }

    /// Parses rows of `#` (wall) and `.` (free), first line northernmost.
    pub fn from_ascii(text: &str, resolution: f64) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() || !(resolution > 0.0) {
            return param("floor plan needs at least one row and a positive resolution");
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return param("floor plan rows must have equal length");
        }
        let height = rows.len();
        let mut cells = vec![true; width * height];
        for (k, r) in rows.iter().enumerate() {
            let y = height - 1 - k;
            for (x, ch) in r.bytes().enumerate() {
                cells[y * width + x] = match ch {
                    b'#' => true,
                    b'.' => false,
                    _ => return param(format!("unexpected floor plan character {:?}", ch as char)),
                };
            }
        }
        Ok(Self { width, height, resolution, origin: [0.0, 0.0], cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            min: self.origin.to_vec(),
            max: vec![
                self.origin[0] + self.width as f64 * self.resolution,
                self.origin[1] + self.height as f64 * self.resolution,
            ],
        }
    }

    /// Marks the rectangle `[x0, x1] x [y0, y1]` (metres) free.
    pub fn carve(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.fill(x0, y0, x1, y1, false);
    }

    /// Marks the rectangle `[x0, x1] x [y0, y1]` (metres) occupied.
    pub fn block(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.fill(x0, y0, x1, y1, true);
    }

    fn fill(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, value: bool) {
        let r = self.resolution;
        let cx0 = ((x0 - self.origin[0]) / r).round().max(0.0) as usize;
        let cy0 = ((y0 - self.origin[1]) / r).round().max(0.0) as usize;
        let cx1 = (((x1 - self.origin[0]) / r).round() as usize).min(self.width);
        let cy1 = (((y1 - self.origin[1]) / r).round() as usize).min(self.height);
        for y in cy0..cy1 {
            for x in cx0..cx1 {
                self.cells[y * self.width + x] = value;
            }
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin[0]) / self.resolution;
        let fy = (y - self.origin[1]) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (cx, cy) = (fx.floor() as usize, fy.floor() as usize);
        (cx < self.width && cy < self.height).then_some((cx, cy))
    }

    /// Anything outside the bitmap counts as occupied.
    pub fn occupied(&self, x: f64, y: f64) -> bool {
        self.cell_of(x, y).is_none_or(|(cx, cy)| self.cells[cy * self.width + cx])
    }

    /// Distance along the ray to the first occupied cell (grid traversal).
    pub fn raycast(&self, x: f64, y: f64, angle: f64, max_range: f64) -> Option<f64> {
        let (mut cx, mut cy) = self.cell_of(x, y)?;
        if self.cells[cy * self.width + cx] {
            return Some(0.0);
        }
        let (dx, dy) = (angle.cos(), angle.sin());
        let r = self.resolution;
        let lx = (x - self.origin[0]) / r;
        let ly = (y - self.origin[1]) / r;
        let step_x: isize = if dx > 0.0 { 1 } else { -1 };
        let step_y: isize = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };
        let mut t_max_x = if dx > 0.0 {
            (cx as f64 + 1.0 - lx) / dx
        } else if dx < 0.0 {
            (lx - cx as f64) / -dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            (cy as f64 + 1.0 - ly) / dy
        } else if dy < 0.0 {
            (ly - cy as f64) / -dy
        } else {
            f64::INFINITY
        };
        let limit = max_range / r;
        loop {
            let t = t_max_x.min(t_max_y);
            if t > limit {
                return None;
            }
            if t_max_x < t_max_y {
                let nx = cx as isize + step_x;
                if nx < 0 || nx as usize >= self.width {
                    return Some(t * r);
                }
                cx = nx as usize;
                t_max_x += t_delta_x;
            } else {
                let ny = cy as isize + step_y;
                if ny < 0 || ny as usize >= self.height {
                    return Some(t * r);
                }
                cy = ny as usize;
                t_max_y += t_delta_y;
            }
            if self.cells[cy * self.width + cx] {
                return Some(t * r);
            }
        }
    }

    /// A 30 m x 22 m office: a ring corridor, three rooms with doors, one sealed room and a pillar.
    pub fn office() -> Self {
        let mut p = Self::solid(30.0, 22.0, 0.1).unwrap();
        p.carve(4.0, 4.0, 26.0, 18.0);
        p.block(7.0, 7.0, 23.0, 15.0);
        // Room inside the ring with a door on its southern wall.
        p.carve(8.0, 8.0, 14.5, 14.0);
        p.carve(10.0, 7.0, 11.0, 8.0);
        // Sealed room: never observed from the corridor.
        p.carve(15.5, 8.0, 22.0, 14.0);
        // Rooms outside the ring.
        p.carve(5.0, 0.5, 13.0, 3.0);
        p.carve(8.0, 3.0, 9.0, 4.0);
        p.carve(15.0, 19.0, 25.0, 21.5);
        p.carve(20.0, 18.0, 21.0, 19.0);
        p.carve(0.5, 6.0, 3.0, 16.0);
        p.carve(3.0, 10.0, 4.0, 11.0);
        p.block(15.0, 4.3, 15.4, 4.7);
        p
    }

    /// Poses every `spacing` metres around the office corridor, with short visits to each open room.
    pub fn office_trajectory(spacing: f64) -> Vec<[f64; 3]> {
        let loop_pts = [[5.5, 5.5], [24.5, 5.5], [24.5, 16.5], [5.5, 16.5], [5.5, 5.5]];
        let mut poses = Vec::new();
        let push_leg = |a: [f64; 2], b: [f64; 2], poses: &mut Vec<[f64; 3]>| {
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            let theta = dy.atan2(dx);
            let n = (len / spacing).floor() as usize;
            for k in 0..n {
                let f = k as f64 * spacing / len;
                poses.push([a[0] + f * dx, a[1] + f * dy, theta]);
            }
        };
        for w in loop_pts.windows(2) {
            push_leg(w[0], w[1], &mut poses);
        }
        let visits = [([10.5, 5.5], [10.5, 11.0]), ([8.5, 5.5], [8.5, 1.75]), ([20.5, 16.5], [20.5, 20.25]), ([5.5, 10.5], [1.75, 10.5])];
        for (door, centre) in visits {
            push_leg(door, centre, &mut poses);
            push_leg(centre, door, &mut poses);
        }
        poses
    }
}

/// Simulates `beams` evenly spread readings per pose; misses read `max_range`.
pub fn simulate_scans(
    plan: &FloorPlan,
    poses: &[[f64; 3]],
    beams: usize,
    max_range: f64,
    range_noise: f64,
    seed: u64,
) -> Result<Vec<LaserScan>> {
    if beams == 0 || !(max_range > 0.0) || !(range_noise >= 0.0) {
        return param("simulate_scans needs beams > 0, max_range > 0 and range_noise >= 0");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, range_noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut scans = Vec::with_capacity(poses.len());
    for &pose in poses {
        let mut scan = LaserScan { pose, ranges: Vec::with_capacity(beams), fov: DEFAULT_FOV, max_range };
        scan.ranges.resize(beams, 0.0);
        for j in 0..beams {
            let a = scan.beam_angle(j);
            scan.ranges[j] = match plan.raycast(pose[0], pose[1], a, max_range) {
                Some(r) if range_noise > 0.0 => (r + noise.sample(&mut rng)).max(0.0),
                Some(r) => r,
                None => max_range,
            };
        }
        scans.push(scan);
    }
    Ok(scans)
}
