//! Bakes ground-truth view labels of the demo scene onto its atlas and
//! exports the condition-aware model.
//!
//! cargo run --release --example bake_export -- [out_dir]

use std::path::PathBuf;

use condition_aware::bake::{bake_views, export_model, BakeView, ViewLabels};
use condition_aware::classes::DT_CLASSES;
use condition_aware::fusion::FusedLabelMap;
use condition_aware::raster::{rasterize_view, texel_view_correspondence};
use condition_aware::synth::{generate_scene, render_views, SceneSpec};

fn main() -> condition_aware::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/bake_export".into()));
    let scene = generate_scene(&SceneSpec::demo())?;
    let views = render_views(&scene);
    let labels: Vec<FusedLabelMap> =
        views.iter().map(|v| FusedLabelMap::from_maps(&v.sb, &v.dt)).collect::<Result<_, _>>()?;
    let corr: Vec<_> = scene
        .cameras
        .iter()
        .map(|c| texel_view_correspondence(&scene.mesh, c, &rasterize_view(&scene.mesh, c)))
        .collect();
    let bake: Vec<BakeView> = (0..labels.len())
        .map(|i| BakeView {
            camera: &scene.cameras[i],
            correspondence: &corr[i],
            labels: ViewLabels::Hard(&labels[i]),
        })
        .collect();
    let model = bake_views(&scene.mesh, &bake)?;
    export_model(&model, &out, serde_json::json!({"source": "ground truth"}))?;

    println!(
        "{} of {} texels observed, up to {} views per texel",
        model.observed_texels(),
        model.atlas().texel_count(),
        model.max_support()
    );
    let mut worst: Vec<(usize, f64)> =
        model.faces().iter().enumerate().map(|(f, s)| (f, s.damage[1..].iter().sum::<f64>())).filter(|(_, d)| *d > 0.0).collect();
    worst.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("most damaged faces:");
    for &(f, _) in worst.iter().take(5) {
        let s = &model.faces()[f];
        let parts: Vec<String> =
            DT_CLASSES.iter().zip(s.damage).skip(1).map(|(n, v)| format!("{n} {:.0}%", 100.0 * v)).collect();
        println!("  face {f}: {} ({:.0}% observed)", parts.join(", "), 100.0 * s.observed);
    }
    println!("model written to {}", out.display());
    Ok(())
}
