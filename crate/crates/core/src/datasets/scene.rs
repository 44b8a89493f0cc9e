//! Synthetic tabletop scenes: analytic primitives seen by a depth camera.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{input, param, Result};
use crate::geometry::{Bounds, Points};
use crate::sampling::{LabeledDataset, FREE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned box.
    Box { half_extents: [f64; 3] },
    /// Cylinder with a vertical axis.
    Cylinder { radius: f64, half_height: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub centre: [f64; 3],
    pub class: u32,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalise(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn at(o: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

const HIT_EPS: f64 = 1e-9;

impl Primitive {
    fn validate(&self) -> Result<()> {
        let ok = match self.shape {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0),
            Shape::Cylinder { radius, half_height } => radius > 0.0 && half_height > 0.0,
        };
        if !ok || self.centre.iter().any(|c| !c.is_finite()) {
            return param(format!("primitive {self:?} has non-positive size or non-finite centre"));
        }
        Ok(())
    }

    /// Lowest and highest corner of the axis-aligned bounding box.
    pub fn aabb(&self) -> ([f64; 3], [f64; 3]) {
        let h = match self.shape {
            Shape::Sphere { radius } => [radius; 3],
            Shape::Box { half_extents } => half_extents,
            Shape::Cylinder { radius, half_height } => [radius, radius, half_height],
        };
        let c = self.centre;
        ([c[0] - h[0], c[1] - h[1], c[2] - h[2]], [c[0] + h[0], c[1] + h[1], c[2] + h[2]])
    }

    /// Signed distance: negative inside, zero on the surface.
    pub fn sdf(&self, p: [f64; 3]) -> f64 {
        let q = sub(p, self.centre);
        match self.shape {
            Shape::Sphere { radius } => norm(q) - radius,
            Shape::Box { half_extents: h } => {
                let d = [q[0].abs() - h[0], q[1].abs() - h[1], q[2].abs() - h[2]];
                let outside = norm([d[0].max(0.0), d[1].max(0.0), d[2].max(0.0)]);
                outside + d[0].max(d[1]).max(d[2]).min(0.0)
            }
            Shape::Cylinder { radius, half_height } => {
                let dr = q[0].hypot(q[1]) - radius;
                let dz = q[2].abs() - half_height;
                dr.max(0.0).hypot(dz.max(0.0)) + dr.max(dz).min(0.0)
            }
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.sdf(p) <= 0.0
    }

    /// Smallest positive ray parameter at which `o + t d` meets the surface.
    pub fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        let q = sub(o, self.centre);
        let mut best: Option<f64> = None;
        let mut consider = |t: f64, ok: bool| {
            if ok && t > HIT_EPS && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        };
        match self.shape {
            Shape::Sphere { radius } => {
                let b = dot(q, d);
                let a = dot(d, d);
                let c = dot(q, q) - radius * radius;
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    consider((-b - s) / a, true);
                    consider((-b + s) / a, true);
                }
            }
            Shape::Box { half_extents: h } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if q[k].abs() > h[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-h[k] - q[k]) / d[k];
                    let b = (h[k] - q[k]) / d[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 <= t1 {
                    consider(t0, true);
                    consider(t1, true);
                }
            }
            Shape::Cylinder { radius, half_height } => {
                let a = d[0] * d[0] + d[1] * d[1];
                if a > 0.0 {
                    let b = q[0] * d[0] + q[1] * d[1];
                    let c = q[0] * q[0] + q[1] * q[1] - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            consider(t, (q[2] + t * d[2]).abs() <= half_height);
                        }
                    }
                }
                if d[2] != 0.0 {
                    for z in [-half_height, half_height] {
                        let t = (z - q[2]) / d[2];
                        let x = q[0] + t * d[0];
                        let y = q[1] + t * d[1];
                        consider(t, x * x + y * y <= radius * radius);
                    }
                }
            }
        }
        best
    }

    pub fn surface_area(&self) -> f64 {
        match self.shape {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Box { half_extents: h } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Shape::Cylinder { radius, half_height } => 2.0 * PI * radius * (2.0 * half_height) + 2.0 * PI * radius * radius,
        }
    }

    /// Point drawn uniformly by area from the surface.
    fn sample_surface(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let c = self.centre;
        match self.shape {
            Shape::Sphere { radius } => {
                let g: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut *rng));
                let u = normalise(g);
                at(c, u, radius)
            }
            Shape::Box { half_extents: h } => {
                let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut axis = 2;
                for (k, &a) in areas.iter().enumerate() {
                    if pick < a {
                        axis = k;
                        break;
                    }
                    pick -= a;
                }
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = if k == axis { sign * h[k] } else { rng.random_range(-h[k]..h[k]) };
                }
                [c[0] + p[0], c[1] + p[1], c[2] + p[2]]
            }
            Shape::Cylinder { radius, half_height } => {
                let side = 4.0 * PI * radius * half_height;
                let caps = 2.0 * PI * radius * radius;
                let theta = rng.random_range(0.0..2.0 * PI);
                if rng.random::<f64>() * (side + caps) < side {
                    let z = rng.random_range(-half_height..half_height);
                    [c[0] + radius * theta.cos(), c[1] + radius * theta.sin(), c[2] + z]
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let z = if rng.random::<bool>() { half_height } else { -half_height };
                    [c[0] + r * theta.cos(), c[1] + r * theta.sin(), c[2] + z]
                }
            }
        }
    }
}

/// Rectangular table slab whose top face lies at the scene's table height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub thickness: f64,
    pub class: u32,
}

/// Pinhole camera. `fov` is the full horizontal and vertical angle in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub fov: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub table_height: f64,
    pub table: TableSpec,
    pub camera_pose: CameraPose,
    /// Known classes C, free space included (free is class 1).
    pub num_classes: u32,
    /// Padding of the workspace around the table and objects, metres.
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    0.1
}

impl SceneSpec {
    /// Random tabletop: `objects` non-overlapping primitives resting on an
    /// 0.8 x 0.6 m table, seen from a camera in front of and above it.
    ///
    /// The table is class 2; objects take classes `3..=num_classes` in turn,
    /// or 2 as well when `num_classes == 2`.
    pub fn random_tabletop(objects: usize, num_classes: u32, seed: u64) -> Result<Self> {
        if objects == 0 {
            return param("a random tabletop needs at least one object");
        }
        if num_classes < 2 {
            return param("a scene needs free space plus at least one occupied class");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut primitives: Vec<Primitive> = Vec::with_capacity(objects);
        let mut footprints: Vec<([f64; 2], f64)> = Vec::new();
        let mut attempts = 0;
        while primitives.len() < objects {
            attempts += 1;
            if attempts > 10_000 {
                return param(format!("could not place {objects} objects on the table"));
            }
            let shape = match rng.random_range(0..3) {
                0 => Shape::Sphere { radius: rng.random_range(0.04..0.08) },
                1 => Shape::Box {
                    half_extents: [rng.random_range(0.03..0.08), rng.random_range(0.03..0.08), rng.random_range(0.03..0.1)],
                },
                _ => Shape::Cylinder { radius: rng.random_range(0.03..0.06), half_height: rng.random_range(0.04..0.1) },
            };
            let (reach, height) = match shape {
                Shape::Sphere { radius } => (radius, radius),
                Shape::Box { half_extents: h } => (h[0].hypot(h[1]), h[2]),
                Shape::Cylinder { radius, half_height } => (radius, half_height),
            };
            let xy = [rng.random_range(-0.25..0.25), rng.random_range(-0.15..0.15)];
            if footprints.iter().any(|(c, r)| (c[0] - xy[0]).hypot(c[1] - xy[1]) < r + reach + 0.03) {
                continue;
            }
            footprints.push((xy, reach));
            let class = if num_classes > 2 { 3 + (primitives.len() as u32 % (num_classes - 2)) } else { 2 };
            primitives.push(Primitive { shape, centre: [xy[0], xy[1], height], class });
        }
        Ok(SceneSpec {
            primitives,
            table_height: 0.0,
            table: TableSpec { min: [-0.4, -0.3], max: [0.4, 0.3], thickness: 0.05, class: 2 },
            camera_pose: CameraPose { position: [0.0, -0.9, 0.6], look_at: [0.0, 0.0, 0.05], fov: [1.0, 0.8] },
            num_classes,
            margin: 0.05,
        })
    }
}

/// Closed-form ground truth of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOracle {
    /// Objects first, table last; the first containing solid decides the class.
    solids: Vec<Primitive>,
    workspace: Bounds,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return input("a scene needs at least one primitive");
        }
        if self.num_classes < 2 {
            return param("a scene needs free space plus at least one occupied class");
        }
        let check_class = |c: u32| {
            if c < 2 || c > self.num_classes {
                param(format!("class {c} outside 2..={} (class 1 is free space)", self.num_classes))
            } else {
                Ok(())
            }
        };
        for p in &self.primitives {
            p.validate()?;
            check_class(p.class)?;
            if p.aabb().0[2] < self.table_height - 1e-9 {
                return param(format!("primitive at {:?} extends below the table plane", p.centre));
            }
        }
        check_class(self.table.class)?;
        let t = &self.table;
        if !(t.thickness > 0.0 && t.max[0] > t.min[0] && t.max[1] > t.min[1]) {
            return param("table must have positive thickness and extent");
        }
        let c = &self.camera_pose;
        if !(c.fov.iter().all(|&f| f > 0.0 && f < PI)) {
            return param("camera field of view must lie in (0, pi)");
        }
        if norm(sub(c.look_at, c.position)) == 0.0 {
            return param("camera must look away from its own position");
        }
        if !(self.margin >= 0.0) {
            return param("scene margin must be non-negative");
        }
        Ok(())
    }

    fn table_solid(&self) -> Primitive {
        let t = &self.table;
        let half = [0.5 * (t.max[0] - t.min[0]), 0.5 * (t.max[1] - t.min[1]), 0.5 * t.thickness];
        Primitive {
            shape: Shape::Box { half_extents: half },
            centre: [0.5 * (t.min[0] + t.max[0]), 0.5 * (t.min[1] + t.max[1]), self.table_height - half[2]],
            class: t.class,
        }
    }

    pub fn oracle(&self) -> Result<SceneOracle> {
        self.validate()?;
        let mut solids = self.primitives.clone();
        solids.push(self.table_solid());
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &solids {
            let (a, b) = s.aabb();
            for k in 0..3 {
                lo[k] = lo[k].min(a[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        let workspace = Bounds::new(lo.to_vec(), hi.to_vec())?.expanded(self.margin);
        Ok(SceneOracle { solids, workspace })
    }
}

impl SceneOracle {
    /// Ground-truth class at `p`; free space is class 1.
    pub fn class_at(&self, p: [f64; 3]) -> u32 {
        self.solids.iter().find(|s| s.contains(p)).map_or(FREE, |s| s.class)
    }

    pub fn occupied(&self, p: [f64; 3]) -> bool {
        self.class_at(p) != FREE
    }

    /// Signed distance to the union of all solids.
    pub fn sdf(&self, p: [f64; 3]) -> f64 {
        self.solids.iter().map(|s| s.sdf(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn workspace(&self) -> &Bounds {
        &self.workspace
    }

    pub fn solids(&self) -> &[Primitive] {
        &self.solids
    }

    /// First solid hit by the ray, with its parameter.
    pub fn cast(&self, o: [f64; 3], d: [f64; 3]) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        for s in &self.solids {
            if let Some(t) = s.intersect(o, d) {
                if best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, s.class));
                }
            }
        }
        best
    }

    /// `count` points on the boundary of the union, uniform by area, restricted to `region`.
    pub fn sample_surface(&self, count: usize, region: &Bounds, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let areas: Vec<f64> = self.solids.iter().map(Primitive::surface_area).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Points::with_capacity(3, count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < 1000 * count.max(1) {
            attempts += 1;
            let mut pick = rng.random::<f64>() * total;
            let mut k = areas.len() - 1;
            for (i, &a) in areas.iter().enumerate() {
                if pick < a {
                    k = i;
                    break;
                }
                pick -= a;
            }
            let p = self.solids[k].sample_surface(&mut rng);
            let buried = self.solids.iter().enumerate().any(|(j, s)| j != k && s.sdf(p) < -1e-9);
            if !buried && region.contains(&p) {
                out.push(&p);
            }
        }
        out
    }
}

/// Camera ray directions, stratified over the image plane and jittered by `seed`.
fn camera_rays(cam: &CameraPose, rays: usize, seed: u64) -> Vec<[f64; 3]> {
    let f = normalise(sub(cam.look_at, cam.position));
    let mut right = cross(f, [0.0, 0.0, 1.0]);
    if norm(right) < 1e-12 {
        right = [1.0, 0.0, 0.0];
    }
    let right = normalise(right);
    let up = cross(right, f);
    let tx = (0.5 * cam.fov[0]).tan();
    let ty = (0.5 * cam.fov[1]).tan();
    let side = (rays as f64).sqrt().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::with_capacity(rays);
    'outer: for j in 0..side {
        for i in 0..side {
            if dirs.len() == rays {
                break 'outer;
            }
            let u = -1.0 + 2.0 * (i as f64 + rng.random::<f64>()) / side as f64;
            let v = -1.0 + 2.0 * (j as f64 + rng.random::<f64>()) / side as f64;
            let d = [
                f[0] + u * tx * right[0] + v * ty * up[0],
                f[1] + u * tx * right[1] + v * ty * up[1],
                f[2] + u * tx * right[2] + v * ty * up[2],
            ];
            dirs.push(normalise(d));
        }
    }
    dirs
}

/// Ray-casts the scene from its camera.
///
/// Returns first-hit points labelled by the class of the solid they lie on,
/// and the analytic oracle. Rays that miss everything contribute nothing.
pub fn render_synthetic_scene(spec: &SceneSpec, rays: usize, seed: u64) -> Result<(LabeledDataset, SceneOracle)> {
    let oracle = spec.oracle()?;
    let cam = spec.camera_pose.position;
    if oracle.solids.iter().any(|s| s.contains(cam)) {
        return input("camera lies inside a scene primitive");
    }
    let mut points = Points::with_capacity(3, rays);
    let mut labels = Vec::with_capacity(rays);
    for d in camera_rays(&spec.camera_pose, rays, seed) {
        if let Some((t, class)) = oracle.cast(cam, d) {
            let p = at(cam, d, t);
            if oracle.workspace.contains(&p) {
                points.push(&p);
                labels.push(class);
            }
        }
    }
    if points.is_empty() {
        return input("no camera ray hit the scene");
    }
    let data = LabeledDataset::with_bounds(points, labels, spec.num_classes, oracle.workspace.clone())?;
    Ok((data, oracle))
}

/// Surface hits plus free-space samples along each camera ray, clipped to the workspace.
pub fn scene_training_data(spec: &SceneSpec, rays: usize, free_step: f64, seed: u64) -> Result<(LabeledDataset, SceneOracle)> {
    let (hits, oracle) = render_synthetic_scene(spec, rays, seed)?;
    let cam = spec.camera_pose.position;
    let (samples, sample_labels) = crate::sampling::ray_samples(&cam, &hits.points, free_step, seed ^ 0xf7ee)?;
    let mut points = Points::with_capacity(3, samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    let mut hit = 0;
    for (p, &l) in samples.iter().zip(&sample_labels) {
        if l == FREE {
            if oracle.workspace.contains(p) {
                points.push(p);
                labels.push(FREE);
            }
        } else {
            points.push(p);
            labels.push(hits.labels[hit]);
            hit += 1;
        }
    }
    let data = LabeledDataset::with_bounds(points, labels, spec.num_classes, oracle.workspace.clone())?;
    Ok((data, oracle))
}
