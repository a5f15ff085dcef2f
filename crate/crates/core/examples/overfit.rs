//! Trains the three reduced-width networks on four rendered views until
//! they memorize them.
//!
//! cargo run --release --example overfit

use condition_aware::classes::Task;
use condition_aware::segnet::{image_tensor, pixel_accuracy, train, NetworkSpec, TrainOptions, TrainSample, TrainSchedule};
use condition_aware::synth::{generate_scene, render_views, ImageSize, SceneSpec};

fn main() -> condition_aware::Result<()> {
    let mut spec = SceneSpec::demo();
    spec.image = ImageSize { width: 96, height: 96 };
    spec.cameras.radius = 14.0;
    let views = render_views(&generate_scene(&spec)?);
    for task in Task::ALL {
        let data: Vec<TrainSample> = views
            .iter()
            .step_by(3)
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
            schedule: TrainSchedule::constant_betas(vec![(100, 2e-3), (100, 2e-3 / 3.0), (100, 2e-4)]),
            seed: 1,
            class_weighting: false,
        };
        let out = train(NetworkSpec::tiny(task.n_classes()), &data, &opts)?;
        let curve: Vec<String> = out.losses.chunks(50).map(|c| format!("{:.3}", c.iter().sum::<f64>() / c.len() as f64)).collect();
        println!(
            "{}: training accuracy {:.2}%, loss per 50 iterations {}",
            task.name(),
            100.0 * pixel_accuracy(&out.network, &data)?,
            curve.join(" ")
        );
    }
    Ok(())
}
