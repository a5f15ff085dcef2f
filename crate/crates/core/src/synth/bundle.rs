use std::path::Path;

use super::render::GroundTruthView;
use super::scene::Scene;
use crate::classes::{fused_palette, Task};
use crate::error::{Error, Result};
use crate::fusion::FusedLabelMap;
use crate::geometry::{save_cameras, write_obj, CameraView};
use crate::imageio::{write_labels, write_rgb};

pub fn view_stem(i: usize) -> String {
    format!("view_{i:03}")
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `mesh.obj`, `cameras.json`, `scene.json`, the ground-truth atlases
/// and per view `images/`, `labels_sb/`, `labels_dp/`, `labels_dt/` and
/// `labels_fused/` PNGs.
pub fn write_scene_bundle(scene: &Scene, views: &[GroundTruthView], dir: &Path) -> Result<()> {
    for sub in ["images", "labels_sb", "labels_dp", "labels_dt", "labels_fused"] {
        create(&dir.join(sub))?;
    }
    let obj = dir.join("mesh.obj");
    std::fs::write(&obj, write_obj(&scene.mesh, None)).map_err(|e| Error::io(&obj, e))?;
    let cams: Vec<CameraView> = scene
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| CameraView {
            camera: c.clone(),
            image: view_stem(i),
        })
        .collect();
    save_cameras(&dir.join("cameras.json"), &cams)?;
    let spec = dir.join("scene.json");
    let mut json = serde_json::to_string_pretty(&scene.spec).expect("spec serializes");
    json.push('\n');
    std::fs::write(&spec, json).map_err(|e| Error::io(&spec, e))?;
    write_labels(&dir.join("atlas_context.png"), &scene.context_atlas, Task::Sb.palette())?;
    write_labels(&dir.join("atlas_damage.png"), &scene.damage_atlas, Task::Dt.palette())?;
    for (i, v) in views.iter().enumerate() {
        let name = format!("{}.png", view_stem(i));
        write_rgb(&dir.join("images").join(&name), &v.rgb)?;
        write_labels(&dir.join("labels_sb").join(&name), &v.sb, Task::Sb.palette())?;
        write_labels(&dir.join("labels_dp").join(&name), &v.dp, Task::Dp.palette())?;
        write_labels(&dir.join("labels_dt").join(&name), &v.dt, Task::Dt.palette())?;
        let fused = FusedLabelMap::from_maps(&v.sb, &v.dt)?;
        write_labels(&dir.join("labels_fused").join(&name), &fused.to_indexed(), &fused_palette())?;
    }
    Ok(())
}
