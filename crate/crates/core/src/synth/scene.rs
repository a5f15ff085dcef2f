use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{PatchShape, SceneSpec};
use crate::classes::{Context, Damage};
use crate::error::Result;
use crate::geometry::{AtlasSize, Camera, Mesh, NO_FACE};
use crate::labels::LabelMap;

/// Texels left empty between charts.
pub const GUTTER: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartKind {
    Facade(u32),
    Roof,
    Ground,
    Sky,
    Billboard(Context),
}

/// Axis-aligned atlas rectangle holding one chart; local `(a, b)` maps to
/// texel space `(x0 + a w, y0 + (1 - b) h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub kind: ChartKind,
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl Chart {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn clamp(&self, x: i64, y: i64) -> (u32, u32) {
        (
            x.clamp(self.x0 as i64, (self.x0 + self.w - 1) as i64) as u32,
            y.clamp(self.y0 as i64, (self.y0 + self.h - 1) as i64) as u32,
        )
    }

    fn uv(&self, atlas: AtlasSize, a: f64, b: f64) -> [f64; 2] {
        let x = self.x0 as f64 + a * self.w as f64;
        let y = self.y0 as f64 + (1.0 - b) * self.h as f64;
        [x / atlas.width as f64, 1.0 - y / atlas.height as f64]
    }

    /// Local coordinates of a texel center.
    pub fn local(&self, x: u32, y: u32) -> (f64, f64) {
        let a = (x as f64 + 0.5 - self.x0 as f64) / self.w as f64;
        let b = 1.0 - (y as f64 + 0.5 - self.y0 as f64) / self.h as f64;
        (a, b)
    }
}

/// Upright rectangle `width × height` centered at `base` on the ground,
/// facing `normal` on its front chart and away on its back chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Billboard {
    pub class: Context,
    pub base: Point3<f64>,
    pub normal: Vector3<f64>,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebrisDisc {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Generated scene: mesh, per-texel ground truth and the camera ring.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub mesh: Mesh,
    /// Context per texel; texels outside every chart hold 0.
    pub context_atlas: LabelMap,
    pub damage_atlas: LabelMap,
    pub cameras: Vec<Camera>,
    pub charts: Vec<Chart>,
    pub face_chart: Vec<u32>,
    pub billboards: Vec<Billboard>,
    pub debris: Vec<DebrisDisc>,
}

impl Scene {
    /// Scene moved rigidly by `p ↦ R p + t`, cameras included.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.mesh = self.mesh.map_vertices(|p| Point3::from(rotation * p.coords + translation))?;
        out.cameras = self
            .cameras
            .iter()
            .map(|c| c.transformed(rotation, translation))
            .collect::<Result<_>>()?;
        Ok(out)
    }

    /// Texels owned by some face.
    pub fn owned_texels(&self) -> usize {
        self.mesh.texel_faces().iter().filter(|&&f| f != NO_FACE).count()
    }
}

struct Builder {
    atlas: AtlasSize,
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    uvs: Vec<[[f64; 2]; 3]>,
    face_chart: Vec<u32>,
}

impl Builder {
    /// Grid over local breakpoints `us × vs`, two triangles per cell, each
    /// wound so its normal agrees with `facing`.
    fn grid(
        &mut self,
        chart_id: usize,
        chart: &Chart,
        us: &[f64],
        vs: &[f64],
        pos: impl Fn(f64, f64) -> Point3<f64>,
        facing: impl Fn(&Point3<f64>) -> Vector3<f64>,
    ) {
        let base = self.vertices.len() as u32;
        for &b in vs {
            for &a in us {
                self.vertices.push(pos(a, b));
            }
        }
        let nu = us.len() as u32;
        let idx = |i: usize, j: usize| base + j as u32 * nu + i as u32;
        for j in 0..vs.len() - 1 {
            for i in 0..us.len() - 1 {
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                for tri in [[0, 1, 2], [0, 2, 3]] {
                    let mut t = tri.map(|k| corners[k]);
                    let p = t.map(|(i, j)| self.vertices[idx(i, j) as usize]);
                    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
                    let centroid = Point3::from((p[0].coords + p[1].coords + p[2].coords) / 3.0);
                    if n.dot(&facing(&centroid)) < 0.0 {
                        t.swap(1, 2);
                    }
                    self.faces.push(t.map(|(i, j)| idx(i, j)));
                    self.uvs.push(t.map(|(i, j)| chart.uv(self.atlas, us[i], vs[j])));
                    self.face_chart.push(chart_id as u32);
                }
            }
        }
    }
}

fn linspace(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn sorted_breaks(mut v: Vec<f64>) -> Vec<f64> {
    v.push(0.0);
    v.push(1.0);
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

/// Shelf packing of `sizes` (w, h) with a gutter, tallest first.
fn pack(sizes: &[(u32, u32)], side: u32) -> Option<Vec<(u32, u32)>> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i].1), i));
    let mut out = vec![(0, 0); sizes.len()];
    let (mut x, mut y, mut shelf) = (1u32, 1u32, 0u32);
    for i in order {
        let (w, h) = sizes[i];
        if x + w + 1 > side {
            x = 1;
            y += shelf + GUTTER;
            shelf = 0;
        }
        if x + w + 1 > side || y + h + 1 > side {
            return None;
        }
        out[i] = (x, y);
        x += w + GUTTER;
        shelf = shelf.max(h);
    }
    Some(out)
}

struct ChartPlan {
    kind: ChartKind,
    /// Extent in meters times a per-kind density factor.
    extent: (f64, f64),
}

fn layout(plans: &[ChartPlan], side: u32) -> Vec<Chart> {
    let sizes = |d: f64| -> Vec<(u32, u32)> {
        plans
            .iter()
            .map(|p| (((p.extent.0 * d).round() as u32).max(2), ((p.extent.1 * d).round() as u32).max(2)))
            .collect()
    };
    let (mut lo, mut hi) = (0.0f64, side as f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if pack(&sizes(mid), side).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = sizes(lo);
    let pos = pack(&s, side).expect("minimum chart sizes fit the atlas");
    plans
        .iter()
        .zip(s.iter().zip(pos))
        .map(|(p, (&(w, h), (x0, y0)))| Chart { kind: p.kind, x0, y0, w, h })
        .collect()
}

const GROUND_FACTOR: f64 = 0.25;
const SKY_FACTOR: f64 = 0.05;
const SKY_ELEVATIONS_DEG: [f64; 7] = [-10.0, 0.0, 10.0, 25.0, 40.0, 55.0, 75.0];
const SKY_SEGMENTS: usize = 24;

pub fn ground_half_size(spec: &SceneSpec) -> f64 {
    2.0 * spec.cameras.radius
}

pub fn sky_radius(spec: &SceneSpec) -> f64 {
    1.6 * ground_half_size(spec) * 2f64.sqrt()
}

/// Facade `i` as (origin, direction of `a`, outward normal).
fn facade_frame(spec: &SceneSpec, i: u32) -> (Point3<f64>, Vector3<f64>, Vector3<f64>) {
    let (hw, hd) = (spec.footprint.width / 2.0, spec.footprint.depth / 2.0);
    match i {
        0 => (Point3::new(-hw, -hd, 0.0), Vector3::x(), -Vector3::y()),
        1 => (Point3::new(hw, -hd, 0.0), Vector3::y(), Vector3::x()),
        2 => (Point3::new(hw, hd, 0.0), -Vector3::x(), Vector3::y()),
        _ => (Point3::new(-hw, hd, 0.0), -Vector3::y(), -Vector3::x()),
    }
}

/// Opening rectangles of one facade in local coordinates `[a0, b0, a1, b1]`.
pub fn openings(spec: &SceneSpec) -> Vec<[f64; 4]> {
    let o = &spec.openings;
    let (rows, cols) = (spec.opening_rows(), o.cols);
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (cw, ch) = (1.0 / cols as f64, 1.0 / rows as f64);
            let a0 = (c as f64 + (1.0 - o.width_fraction) / 2.0) * cw;
            let b0 = (r as f64 + o.sill_fraction) * ch;
            out.push([a0, b0, a0 + o.width_fraction * cw, b0 + o.height_fraction * ch]);
        }
    }
    out
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Distance in meters from facade point `(x, z)` to a polyline given in
/// local coordinates.
pub fn polyline_distance(points: &[[f64; 2]], scale: (f64, f64), p: [f64; 2]) -> f64 {
    let m = |q: &[f64; 2]| [q[0] * scale.0, q[1] * scale.1];
    if points.len() == 1 {
        let q = m(&points[0]);
        return (p[0] - q[0]).hypot(p[1] - q[1]);
    }
    points
        .windows(2)
        .map(|w| segment_distance(p, m(&w[0]), m(&w[1])))
        .fold(f64::INFINITY, f64::min)
}

/// Ground-truth labels of a chart point.
fn chart_label(scene_spec: &SceneSpec, debris: &[DebrisDisc], kind: ChartKind, a: f64, b: f64) -> (u8, u8) {
    match kind {
        ChartKind::Facade(i) => {
            let inside = |r: &[f64; 4]| a >= r[0] && a <= r[2] && b >= r[1] && b <= r[3];
            if openings(scene_spec).iter().any(inside) {
                return (Context::Opening.id(), Damage::Background.id());
            }
            let scale = (scene_spec.facade_width(i), scene_spec.footprint.height);
            let mut damage = Damage::Background;
            for p in scene_spec.damage.iter().filter(|p| p.facade == i) {
                let hit = match &p.shape {
                    PatchShape::Rect { rect } => inside(rect),
                    PatchShape::Polyline { points, width } => {
                        polyline_distance(points, scale, [a * scale.0, b * scale.1]) <= width / 2.0
                    }
                };
                if hit {
                    damage = p.class;
                }
            }
            (Context::Building.id(), damage.id())
        }
        ChartKind::Roof => (Context::Building.id(), 0),
        ChartKind::Ground => {
            let g = ground_half_size(scene_spec);
            let (x, y) = ((2.0 * a - 1.0) * g, (2.0 * b - 1.0) * g);
            let on_debris = debris.iter().any(|d| (x - d.center[0]).hypot(y - d.center[1]) <= d.radius);
            (if on_debris { Context::Debris } else { Context::Pavement }.id(), 0)
        }
        ChartKind::Sky => (Context::Sky.id(), 0),
        ChartKind::Billboard(c) => (c.id(), 0),
    }
}

fn place_background(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> (Vec<Billboard>, Vec<DebrisDisc>) {
    let r = spec.cameras.radius;
    let bg = &spec.background;
    let mut billboards = Vec::new();
    let kinds = [
        (Context::Tree, bg.trees, 4.0, 6.0),
        (Context::Person, bg.people, 0.7, 1.8),
        (Context::Vehicle, bg.vehicles, 4.5, 1.6),
    ];
    for (class, count, width, height) in kinds {
        for _ in 0..count {
            let theta = rng.random_range(0.0..2.0 * PI);
            let dist = rng.random_range(1.3 * r..1.8 * r);
            let base = Point3::new(dist * theta.cos(), dist * theta.sin(), 0.0);
            billboards.push(Billboard {
                class,
                base,
                normal: Vector3::new(-theta.cos(), -theta.sin(), 0.0),
                width,
                height,
            });
        }
    }
    let half = 0.5 * spec.footprint.width.hypot(spec.footprint.depth);
    let debris = (0..bg.debris)
        .map(|_| {
            let theta = rng.random_range(0.0..2.0 * PI);
            let radius = rng.random_range(0.8..1.8);
            let dist = rng.random_range(half + radius + 0.5..(half + 0.5 * (r - half)).max(half + radius + 0.6));
            DebrisDisc {
                center: [dist * theta.cos(), dist * theta.sin()],
                radius,
            }
        })
        .collect();
    (billboards, debris)
}

pub fn ring_cameras(spec: &SceneSpec) -> Result<Vec<Camera>> {
    let c = &spec.cameras;
    let target = Point3::from(c.look_at);
    (0..c.count)
        .map(|i| {
            let theta = c.phase_degrees.to_radians() + 2.0 * PI * i as f64 / c.count as f64 - PI / 2.0;
            let eye = Point3::new(c.radius * theta.cos(), c.radius * theta.sin(), c.height);
            Camera::look_at(
                eye,
                target,
                Vector3::z(),
                c.hfov_degrees.to_radians(),
                spec.image.width,
                spec.image.height,
            )
        })
        .collect()
}

/// Builds the mesh, ground-truth atlases and cameras. Identical specs give
/// bit-identical scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (billboards, debris) = place_background(spec, &mut rng);
    let fp = &spec.footprint;

    let mut plans: Vec<ChartPlan> = (0..4)
        .map(|i| ChartPlan {
            kind: ChartKind::Facade(i),
            extent: (spec.facade_width(i), fp.height),
        })
        .collect();
    plans.push(ChartPlan {
        kind: ChartKind::Roof,
        extent: (fp.width, fp.depth),
    });
    let g = ground_half_size(spec);
    if spec.background.ground {
        plans.push(ChartPlan {
            kind: ChartKind::Ground,
            extent: (2.0 * g * GROUND_FACTOR, 2.0 * g * GROUND_FACTOR),
        });
    }
    let rs = sky_radius(spec);
    if spec.background.sky {
        let arc = (SKY_ELEVATIONS_DEG[6] - SKY_ELEVATIONS_DEG[0]).to_radians() * rs;
        plans.push(ChartPlan {
            kind: ChartKind::Sky,
            extent: (2.0 * PI * rs * SKY_FACTOR, arc * SKY_FACTOR),
        });
    }
    for b in &billboards {
        for _ in 0..2 {
            plans.push(ChartPlan {
                kind: ChartKind::Billboard(b.class),
                extent: (b.width, b.height),
            });
        }
    }
    let atlas = AtlasSize::square(spec.atlas);
    let charts = layout(&plans, spec.atlas);

    let mut builder = Builder {
        atlas,
        vertices: Vec::new(),
        faces: Vec::new(),
        uvs: Vec::new(),
        face_chart: Vec::new(),
    };
    let ops = openings(spec);
    let mut next = 0usize;
    for i in 0..4 {
        let (origin, along, out) = facade_frame(spec, i);
        let w = spec.facade_width(i);
        let us = sorted_breaks(ops.iter().flat_map(|r| [r[0], r[2]]).collect());
        let vs = sorted_breaks(ops.iter().flat_map(|r| [r[1], r[3]]).collect());
        let h = fp.height;
        builder.grid(
            next,
            &charts[next],
            &us,
            &vs,
            |a, b| origin + along * (a * w) + Vector3::z() * (b * h),
            |_| out,
        );
        next += 1;
    }
    let (hw, hd) = (fp.width / 2.0, fp.depth / 2.0);
    builder.grid(
        next,
        &charts[next],
        &[0.0, 1.0],
        &[0.0, 1.0],
        |a, b| Point3::new(-hw + a * fp.width, -hd + b * fp.depth, fp.height),
        |_| Vector3::z(),
    );
    next += 1;
    if spec.background.ground {
        let n = ((2.0 * g / 2.0).ceil() as usize).clamp(8, 48);
        let t = linspace(n);
        builder.grid(
            next,
            &charts[next],
            &t,
            &t,
            |a, b| Point3::new((2.0 * a - 1.0) * g, (2.0 * b - 1.0) * g, 0.0),
            |_| Vector3::z(),
        );
        next += 1;
    }
    if spec.background.sky {
        let (e0, e1) = (SKY_ELEVATIONS_DEG[0], SKY_ELEVATIONS_DEG[6]);
        let vs: Vec<f64> = SKY_ELEVATIONS_DEG.iter().map(|e| (e - e0) / (e1 - e0)).collect();
        builder.grid(
            next,
            &charts[next],
            &linspace(SKY_SEGMENTS),
            &vs,
            |a, b| {
                let az = 2.0 * PI * a;
                let el = (e0 + b * (e1 - e0)).to_radians();
                Point3::new(rs * el.cos() * az.cos(), rs * el.cos() * az.sin(), rs * el.sin())
            },
            |p| -p.coords,
        );
        next += 1;
    }
    for b in &billboards {
        let along = Vector3::z().cross(&b.normal);
        for side in [1.0, -1.0] {
            let n = b.normal * side;
            let dir = along * side;
            builder.grid(
                next,
                &charts[next],
                &[0.0, 1.0],
                &[0.0, 1.0],
                |u, v| b.base + dir * ((u - 0.5) * b.width) + Vector3::z() * (v * b.height),
                |_| n,
            );
            next += 1;
        }
    }

    let mesh = Mesh::new(builder.vertices, builder.faces, builder.uvs, atlas)?;
    let side = spec.atlas as usize;
    let mut context = vec![0u8; side * side];
    let mut damage = vec![0u8; side * side];
    for chart in &charts {
        for y in chart.y0..chart.y0 + chart.h {
            for x in chart.x0..chart.x0 + chart.w {
                let (a, b) = chart.local(x, y);
                let (c, d) = chart_label(spec, &debris, chart.kind, a, b);
                let i = y as usize * side + x as usize;
                context[i] = c;
                damage[i] = d;
            }
        }
    }
    Ok(Scene {
        spec: spec.clone(),
        mesh,
        context_atlas: LabelMap::new(side, side, context)?,
        damage_atlas: LabelMap::new(side, side, damage)?,
        cameras: ring_cameras(spec)?,
        charts,
        face_chart: builder.face_chart,
        billboards,
        debris,
    })
}
