#![allow(dead_code)]

use condition_aware::segnet::{ConvLayer, Tensor};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor<f64> {
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn random_layer(rng: &mut ChaCha8Rng, k: usize, s: usize, c_in: usize, c_out: usize) -> ConvLayer<f64> {
    let mut l = ConvLayer::zeros(k, s, c_in, c_out);
    l.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
    l
}

/// Direct sum over the kernel window with zero padding; total padding
/// `k - 1`, split `(k-1)/2` before.
pub fn naive_conv(layer: &ConvLayer<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let (k, s) = (layer.k, layer.s);
    let oh = x.h.div_ceil(s);
    let ow = x.w.div_ceil(s);
    let pad = ((k - 1) / 2) as isize;
    let mut out = Tensor::zeros(oh, ow, layer.c_out);
    for oy in 0..oh {
        for ox in 0..ow {
            for o in 0..layer.c_out {
                let mut acc = layer.bias[o];
                for dy in 0..k {
                    for dx in 0..k {
                        let iy = (oy * s) as isize + dy as isize - pad;
                        let ix = (ox * s) as isize + dx as isize - pad;
                        if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                            continue;
                        }
                        for c in 0..layer.c_in {
                            acc += layer.w(dy, dx, c, o) * x.at(iy as usize, ix as usize, c);
                        }
                    }
                }
                out.data[(oy * ow + ox) * layer.c_out + o] = acc;
            }
        }
    }
    out
}

/// Möller–Trumbore; returns the ray parameter of the hit.
pub fn ray_triangle(origin: Point3<f64>, dir: Vector3<f64>, tri: [Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Spec-level reimplementation of the segmentation forward pass with naive
/// loops: ReLU after every trunk conv, residual from two convs back (1×1
/// strided projection when the shape differs), 2×2 max pooling at stage
/// starts, 1×1 heads at tapped stage ends, half-pixel bilinear upsampling,
/// summed logits and softmax.
pub fn reference_forward(
    spec: &condition_aware::segnet::NetworkSpec,
    layers: &[ConvLayer<f64>],
    x: &Tensor<f64>,
) -> Vec<Vec<f64>> {
    let relu = |t: &mut Tensor<f64>| t.data.iter_mut().for_each(|v| *v = v.max(0.0));
    let pool = |t: &Tensor<f64>| {
        let mut out = Tensor::zeros(t.h / 2, t.w / 2, t.c);
        for y in 0..t.h / 2 {
            for x in 0..t.w / 2 {
                for c in 0..t.c {
                    let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|(dy, dx)| t.at(2 * y + dy, 2 * x + dx, c))
                        .fold(f64::NEG_INFINITY, f64::max);
                    out.data[(y * out.w + x) * t.c + c] = m;
                }
            }
        }
        out
    };
    let mut acts: Vec<Tensor<f64>> = Vec::new();
    let mut a = naive_conv(&layers[0], x);
    relu(&mut a);
    acts.push(a);
    let trunk_len = 1 + spec.stages.iter().map(|s| s.convs).sum::<usize>();
    let mut next_proj = trunk_len;
    let mut stage_last = Vec::new();
    let mut j = 1;
    for (si, st) in spec.stages.iter().enumerate() {
        for k in 0..st.convs {
            let input = if si > 0 && k == 0 { pool(&acts[j - 1]) } else { acts[j - 1].clone() };
            let mut z = naive_conv(&layers[j], &input);
            if j % 2 == 0 {
                let src = &acts[j - 2];
                if src.shape() == z.shape() {
                    z.data.iter_mut().zip(&src.data).for_each(|(a, b)| *a += b);
                } else {
                    let p = naive_conv(&layers[next_proj], src);
                    next_proj += 1;
                    assert_eq!(p.shape(), z.shape());
                    z.data.iter_mut().zip(&p.data).for_each(|(a, b)| *a += b);
                }
            }
            relu(&mut z);
            acts.push(z);
            j += 1;
        }
        stage_last.push(j - 1);
    }
    let n = spec.n_classes;
    let mut logits = vec![vec![0.0; n]; x.h * x.w];
    for (hi, &s) in spec.taps.iter().enumerate() {
        let head = naive_conv(&layers[next_proj + hi], &acts[stage_last[s]]);
        let f = x.h / head.h;
        let tap = |len: usize, o: usize| {
            let src = ((o as f64 + 0.5) / f as f64 - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = src.floor() as usize;
            (i0, (i0 + 1).min(len - 1), src - i0 as f64)
        };
        for oy in 0..x.h {
            let (y0, y1, wy) = tap(head.h, oy);
            for ox in 0..x.w {
                let (x0, x1, wx) = tap(head.w, ox);
                for c in 0..n {
                    let v = (1.0 - wy) * ((1.0 - wx) * head.at(y0, x0, c) + wx * head.at(y0, x1, c))
                        + wy * ((1.0 - wx) * head.at(y1, x0, c) + wx * head.at(y1, x1, c));
                    logits[oy * x.w + ox][c] += v;
                }
            }
        }
    }
    logits
        .into_iter()
        .map(|l| {
            let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// What a pixel-center ray sees according to the ray-casting oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RaySample {
    Hit { face: u32, depth: f64 },
    Miss,
    /// Too close to a projected edge or a depth tie to call.
    Ambiguous,
}

pub const EDGE_EPS: f64 = 1e-6;

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Direct pinhole projection from the camera's parameters.
pub fn project(cam: &condition_aware::geometry::Camera, p: &Point3<f64>) -> Option<[f64; 3]> {
    let pc = cam.rotation() * p.coords + cam.translation();
    (pc.z > 1e-6).then(|| [cam.fx() * pc.x / pc.z + cam.cx(), cam.fy() * pc.y / pc.z + cam.cy(), pc.z])
}

/// Casts a ray through every pixel center against every front-facing face
/// lying entirely in front of the camera.
pub fn ray_cast_view(mesh: &condition_aware::geometry::Mesh, cam: &condition_aware::geometry::Camera) -> Vec<RaySample> {
    let center = cam.center();
    struct Tri {
        face: u32,
        corners: [Point3<f64>; 3],
        screen: [[f64; 2]; 3],
    }
    let tris: Vec<Tri> = (0..mesh.face_count())
        .filter_map(|f| {
            let c = mesh.face_corners(f);
            let n = (c[1] - c[0]).cross(&(c[2] - c[0]));
            if n.dot(&(c[0] - center)) >= 0.0 {
                return None;
            }
            let s: Vec<[f64; 3]> = c.iter().map(|p| project(cam, p)).collect::<Option<_>>()?;
            Some(Tri {
                face: f as u32,
                corners: c,
                screen: [[s[0][0], s[0][1]], [s[1][0], s[1][1]], [s[2][0], s[2][1]]],
            })
        })
        .collect();
    let (w, h) = (cam.width(), cam.height());
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let (o, d) = cam.ray(p[0], p[1]);
            let mut ambiguous = false;
            let mut best: Option<(f64, u32)> = None;
            for t in &tris {
                let near_edge = (0..3).any(|k| point_segment_distance(p, t.screen[k], t.screen[(k + 1) % 3]) < EDGE_EPS);
                let hit = ray_triangle(o, d, t.corners);
                if near_edge {
                    ambiguous = true;
                    continue;
                }
                if let Some(depth) = hit {
                    match best {
                        Some((bd, _)) if (depth - bd).abs() <= 1e-9 * bd => ambiguous = true,
                        Some((bd, _)) if depth >= bd => {}
                        _ => best = Some((depth, t.face)),
                    }
                }
            }
            out.push(match (ambiguous, best) {
                (true, _) => RaySample::Ambiguous,
                (false, Some((depth, face))) => RaySample::Hit { face, depth },
                (false, None) => RaySample::Miss,
            });
        }
    }
    out
}

/// Expected texel correspondence from the oracle: texel centers inside a
/// UV triangle (by barycentric sign test), lifted to 3D, projected, and kept
/// when the ray through that pixel's center sees the same face at a depth
/// within tolerance. Returns (entries, ambiguous texels) where ambiguous
/// texels sit near a UV edge, a pixel border, an edge in image space, or the
/// depth tolerance boundary.
pub fn oracle_correspondence(
    mesh: &condition_aware::geometry::Mesh,
    cam: &condition_aware::geometry::Camera,
    rays: &[RaySample],
) -> (std::collections::BTreeSet<((u32, u32), (u32, u32), u32)>, std::collections::BTreeSet<(u32, u32)>) {
    use condition_aware::raster::depth_tolerance;
    let atlas = mesh.atlas();
    let (aw, ah) = (atlas.width as f64, atlas.height as f64);
    let mut entries = std::collections::BTreeSet::new();
    let mut ambiguous = std::collections::BTreeSet::new();
    for f in 0..mesh.face_count() {
        let uv = mesh.uvs()[f].map(|c| [c[0] * aw, (1.0 - c[1]) * ah]);
        let [a, b, c] = uv;
        let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        let xs = uv.iter().map(|p| p[0]);
        let ys = uv.iter().map(|p| p[1]);
        let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
        for ty in (y0.floor().max(0.0) as u32)..=(y1.ceil().min(ah - 1.0) as u32) {
            for tx in (x0.floor().max(0.0) as u32)..=(x1.ceil().min(aw - 1.0) as u32) {
                let p = [tx as f64 + 0.5, ty as f64 + 0.5];
                let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                let l = [edge(b, c) / area, edge(c, a) / area, edge(a, b) / area];
                let min_dist = (0..3).map(|k| point_segment_distance(p, uv[k], uv[(k + 1) % 3])).fold(f64::INFINITY, f64::min);
                if min_dist < EDGE_EPS {
                    ambiguous.insert((tx, ty));
                    continue;
                }
                if l.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let q = mesh.interpolate(f, l);
                let Some([u, v, z]) = project(cam, &q) else { continue };
                if !(u >= 0.0 && v >= 0.0 && u < cam.width() as f64 && v < cam.height() as f64) {
                    continue;
                }
                if (u - u.round()).abs() < EDGE_EPS || (v - v.round()).abs() < EDGE_EPS {
                    ambiguous.insert((tx, ty));
                    continue;
                }
                let (px, py) = (u.floor() as u32, v.floor() as u32);
                match rays[(py * cam.width() + px) as usize] {
                    RaySample::Ambiguous => {
                        ambiguous.insert((tx, ty));
                    }
                    RaySample::Miss => {}
                    RaySample::Hit { face, depth } => {
                        if face != f as u32 {
                            continue;
                        }
                        let tol = depth_tolerance(depth);
                        let gap = (z - depth).abs();
                        if (gap - tol).abs() < 1e-9 * depth.max(1.0) {
                            ambiguous.insert((tx, ty));
                        } else if gap <= tol {
                            entries.insert(((tx, ty), (px, py), f as u32));
                        }
                    }
                }
            }
        }
    }
    (entries, ambiguous)
}

/// Softmax of uniform random logits in [-scale, scale].
pub fn random_probabilities(
    rng: &mut ChaCha8Rng,
    w: usize,
    h: usize,
    n: usize,
    scale: f64,
) -> condition_aware::labels::ProbabilityMap {
    let logits: Vec<f64> = (0..w * h * n).map(|_| rng.random_range(-scale..scale)).collect();
    condition_aware::labels::ProbabilityMap::from_logits(w, h, n, &logits).unwrap()
}

/// Rendered views of the demo building at `side`×`side` from a closer ring.
pub fn small_views(side: u32) -> Vec<condition_aware::synth::GroundTruthView> {
    use condition_aware::synth::{generate_scene, render_views, ImageSize, SceneSpec};
    let mut spec = SceneSpec::demo();
    spec.image = ImageSize { width: side, height: side };
    spec.cameras.radius = 14.0;
    render_views(&generate_scene(&spec).unwrap())
}

pub fn training_set(
    views: &[condition_aware::synth::GroundTruthView],
    task: condition_aware::classes::Task,
) -> Vec<condition_aware::segnet::TrainSample> {
    use condition_aware::classes::Task;
    views
        .iter()
        .map(|v| {
            let labels = match task {
                Task::Sb => &v.sb,
                Task::Dp => &v.dp,
                Task::Dt => &v.dt,
            };
            condition_aware::segnet::TrainSample {
                image: condition_aware::segnet::image_tensor(&v.rgb),
                labels: labels.data().to_vec(),
            }
        })
        .collect()
}

/// Asserts buffers and correspondence agree with the ray-casting oracle and
/// returns (compared pixels, compared texels).
pub fn check_against_oracle(
    mesh: &condition_aware::geometry::Mesh,
    cam: &condition_aware::geometry::Camera,
    b: &condition_aware::raster::ViewBuffers,
    corr: &condition_aware::raster::TexelCorrespondence,
) -> (usize, usize) {
    let rays = ray_cast_view(mesh, cam);
    let mut pixels = 0;
    for (i, r) in rays.iter().enumerate() {
        let (x, y) = (i as u32 % cam.width(), i as u32 / cam.width());
        match *r {
            RaySample::Ambiguous => continue,
            RaySample::Miss => assert_eq!(b.face_at(x, y), None, "pixel ({x},{y})"),
            RaySample::Hit { face, depth } => {
                assert_eq!(b.face_at(x, y), Some(face), "pixel ({x},{y})");
                assert!((b.depth_at(x, y) - depth).abs() <= 1e-9 * depth, "depth at ({x},{y})");
            }
        }
        pixels += 1;
    }
    let (expected, ambiguous) = oracle_correspondence(mesh, cam, &rays);
    let got: std::collections::BTreeSet<_> = corr
        .entries
        .iter()
        .filter(|e| !ambiguous.contains(&e.texel))
        .map(|e| (e.texel, e.pixel, e.face))
        .collect();
    assert_eq!(got, expected);
    (pixels, expected.len())
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree(dir: &std::path::Path) -> std::collections::BTreeMap<std::path::PathBuf, Vec<u8>> {
    use std::collections::BTreeMap;
    use std::path::{Path, PathBuf};
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
