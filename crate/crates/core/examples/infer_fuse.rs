//! Trains small networks on part of the demo ring, runs them on a held-out
//! view and fuses the three posteriors under the compatibility rules.
//!
//! cargo run --release --example infer_fuse -- [out_dir]

use std::path::PathBuf;

use condition_aware::classes::{fused_palette, Task, N_FUSED};
use condition_aware::evalkit::{confusion_matrix, EvalReport};
use condition_aware::fusion::{fuse, FusedLabelMap, FusionConfig};
use condition_aware::imageio::{write_labels, write_rgb};
use condition_aware::segnet::{image_tensor, train, NetworkSpec, TrainOptions, TrainSample, TrainSchedule};
use condition_aware::synth::{generate_scene, render_views, ImageSize, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/infer_fuse".into()));
    std::fs::create_dir_all(&out)?;
    let mut spec = SceneSpec::demo();
    spec.image = ImageSize { width: 96, height: 96 };
    spec.cameras.radius = 14.0;
    let views = render_views(&generate_scene(&spec)?);
    let (held_out, train_views) = views.split_last().expect("demo has views");

    let input = image_tensor(&held_out.rgb);
    let mut posteriors = Vec::new();
    for task in Task::ALL {
        let data: Vec<TrainSample> = train_views
            .iter()
            .map(|v| {
                let labels = match task {
                    Task::Sb => &v.sb,
                    Task::Dp => &v.dp,
                    Task::Dt => &v.dt,
                };
                TrainSample { image: image_tensor(&v.rgb), labels: labels.data().to_vec() }
            })
            .collect();
        let opts = TrainOptions {
            schedule: TrainSchedule::constant_betas(vec![(150, 2e-3), (50, 2e-4)]),
            seed: 2,
            class_weighting: true,
        };
        let net = train(NetworkSpec::tiny(task.n_classes()), &data, &opts)?.network;
        posteriors.push(net.predict(&input)?);
    }
    let fused = fuse(&posteriors[0], &posteriors[1], &posteriors[2], &FusionConfig::default())?;
    let truth = FusedLabelMap::from_maps(&held_out.sb, &held_out.dt)?;
    let cm = confusion_matrix(&fused.to_indexed(), &truth.to_indexed(), N_FUSED, None)?;
    let report = EvalReport::new(1, cm)?;
    println!(
        "held-out view: fused accuracy {:.1}% over {} pixels",
        100.0 * report.accuracies.pixel_accuracy,
        report.pixels
    );

    write_rgb(&out.join("image.png"), &held_out.rgb)?;
    write_labels(&out.join("fused.png"), &fused.to_indexed(), &fused_palette())?;
    write_labels(&out.join("truth.png"), &truth.to_indexed(), &fused_palette())?;
    println!("image, prediction and ground truth written to {}", out.display());
    Ok(())
}
