//! Scores a corrupted copy of rendered labels against the originals.
//!
//! cargo run --release --example evaluate -- [flip_probability]

use condition_aware::classes::SB_CLASSES;
use condition_aware::evalkit::{ConfusionMatrix, EvalReport};
use condition_aware::labels::LabelMap;
use condition_aware::synth::{generate_scene, render_views, ImageSize, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> condition_aware::Result<()> {
    let flip: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let mut spec = SceneSpec::demo();
    spec.image = ImageSize { width: 128, height: 128 };
    let views = render_views(&generate_scene(&spec)?);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cm = ConfusionMatrix::new(&SB_CLASSES);
    for v in &views {
        let noisy: Vec<u8> = v
            .sb
            .data()
            .iter()
            .map(|&l| if rng.random_bool(flip) { rng.random_range(0..SB_CLASSES.len() as u8) } else { l })
            .collect();
        let pred = LabelMap::new(v.sb.width(), v.sb.height(), noisy)?;
        cm.accumulate(&pred, &v.sb, None)?;
    }
    print!("{}", EvalReport::new(views.len(), cm)?.to_text());
    Ok(())
}
