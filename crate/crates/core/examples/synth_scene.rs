//! Generates the demo scene and writes a full ground-truth bundle.
//!
//! cargo run --release --example synth_scene -- [out_dir]

use std::path::PathBuf;

use condition_aware::classes::{Context, Damage};
use condition_aware::synth::{generate_scene, render_views, write_scene_bundle, SceneSpec};

fn main() -> condition_aware::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/synth_scene".into()));
    let scene = generate_scene(&SceneSpec::demo())?;
    let views = render_views(&scene);
    write_scene_bundle(&scene, &views, &out)?;

    println!("{} faces, {} owned texels, {} views", scene.mesh.face_count(), scene.owned_texels(), views.len());
    let mut damage = [0usize; 4];
    for (&c, &d) in scene.context_atlas.data().iter().zip(scene.damage_atlas.data()) {
        if c == Context::Building.id() {
            damage[d as usize] += 1;
        }
    }
    for d in Damage::ALL {
        println!("{:>10}: {} building texels", d.name(), damage[d as usize]);
    }
    println!("bundle written to {}", out.display());
    Ok(())
}
