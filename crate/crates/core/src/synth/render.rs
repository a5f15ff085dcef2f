use nalgebra::Vector3;
use rayon::prelude::*;

use super::scene::Scene;
use crate::classes::{Context, Damage};
use crate::geometry::Camera;
use crate::imageio::RgbImage;
use crate::labels::LabelMap;
use crate::raster::rasterize_view;

/// Label maps and RGB rendering of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthView {
    pub sb: LabelMap,
    pub dp: LabelMap,
    pub dt: LabelMap,
    pub rgb: RgbImage,
}

const ALBEDO: [[f64; 3]; 8] = [
    [190.0, 170.0, 140.0],
    [50.0, 70.0, 110.0],
    [105.0, 105.0, 100.0],
    [140.0, 100.0, 60.0],
    [150.0, 200.0, 240.0],
    [40.0, 120.0, 45.0],
    [220.0, 180.0, 60.0],
    [160.0, 30.0, 40.0],
];
const DECAL: [[f64; 3]; 4] = [[0.0; 3], [35.0, 30.0, 28.0], [120.0, 125.0, 130.0], [150.0, 70.0, 30.0]];

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Surface texture noise in [-1, 1], fixed per texel.
fn texel_noise(seed: u64, texel: usize) -> f64 {
    (splitmix(seed ^ splitmix(texel as u64)) >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Flat-shaded color of a surface point.
fn shade(context: u8, damage: u8, normal: &Vector3<f64>, noise: f64) -> [u8; 3] {
    let base = if damage != 0 {
        DECAL[damage as usize]
    } else {
        ALBEDO[context as usize]
    };
    let k = if context == Context::Sky.id() {
        1.0
    } else {
        let light = Vector3::new(0.4, -0.3, 0.87).normalize();
        0.55 + 0.45 * normal.dot(&light).abs()
    };
    base.map(|c| (c * k + 12.0 * noise).round().clamp(0.0, 255.0) as u8)
}

/// Labels the surface seen through every pixel center. Each hit is mapped
/// to texel space through the face UVs and looked up in the ground-truth
/// atlas; pixels that see no face are sky.
pub fn render_ground_truth(scene: &Scene, cam: &Camera) -> GroundTruthView {
    let (w, h) = (cam.width() as usize, cam.height() as usize);
    let buffers = rasterize_view(&scene.mesh, cam);
    let atlas = scene.mesh.atlas();
    let side = atlas.width as usize;
    let mut sb = vec![Context::Sky.id(); w * h];
    let mut dt = vec![Damage::Background.id(); w * h];
    let mut rgb = RgbImage::new(w, h);
    let sky = shade(Context::Sky.id(), 0, &Vector3::z(), 0.0);
    let rows: Vec<(Vec<u8>, Vec<u8>, Vec<[u8; 3]>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = (vec![Context::Sky.id(); w], vec![0u8; w], vec![sky; w]);
            for x in 0..w {
                let Some(f) = buffers.face_at(x as u32, y as u32) else { continue };
                let f = f as usize;
                let [a, b, c] = scene.mesh.face_corners(f);
                let n = scene.mesh.face_normal(f);
                let (o, d) = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
                let t = n.dot(&(a - o)) / n.dot(&d);
                let p = o + d * t;
                let (e0, e1, e2) = (b - a, c - a, p - a);
                let (d00, d01, d11) = (e0.dot(&e0), e0.dot(&e1), e1.dot(&e1));
                let (d20, d21) = (e2.dot(&e0), e2.dot(&e1));
                let den = d00 * d11 - d01 * d01;
                let l1 = (d11 * d20 - d01 * d21) / den;
                let l2 = (d00 * d21 - d01 * d20) / den;
                let uv = scene.mesh.uvs()[f];
                let bary = [1.0 - l1 - l2, l1, l2];
                let u = (0..3).map(|k| bary[k] * uv[k][0]).sum::<f64>();
                let v = (0..3).map(|k| bary[k] * uv[k][1]).sum::<f64>();
                let [tx, ty] = atlas.uv_to_texel_space([u, v]);
                let chart = &scene.charts[scene.face_chart[f] as usize];
                let (tx, ty) = chart.clamp(tx.floor() as i64, ty.floor() as i64);
                let texel = ty as usize * side + tx as usize;
                let ctx = scene.context_atlas.data()[texel];
                let dmg = scene.damage_atlas.data()[texel];
                row.0[x] = ctx;
                row.1[x] = dmg;
                row.2[x] = shade(ctx, dmg, &n.normalize(), texel_noise(scene.spec.seed, texel));
            }
            row
        })
        .collect();
    for (y, (s, d, c)) in rows.into_iter().enumerate() {
        sb[y * w..(y + 1) * w].copy_from_slice(&s);
        dt[y * w..(y + 1) * w].copy_from_slice(&d);
        for (x, px) in c.into_iter().enumerate() {
            rgb.put(x, y, px);
        }
    }
    let dp: Vec<u8> = dt.iter().map(|&d| (d != 0) as u8).collect();
    GroundTruthView {
        sb: LabelMap::new(w, h, sb).expect("sized"),
        dp: LabelMap::new(w, h, dp).expect("sized"),
        dt: LabelMap::new(w, h, dt).expect("sized"),
        rgb,
    }
}

/// Ground truth for every ring camera, in camera order.
pub fn render_views(scene: &Scene) -> Vec<GroundTruthView> {
    scene.cameras.par_iter().map(|c| render_ground_truth(scene, c)).collect()
}
