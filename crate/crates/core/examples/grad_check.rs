//! Compares backprop with central differences on the tiny network in f64.
//!
//! cargo run --release --example grad_check

use condition_aware::segnet::{grad_check, GradCheckOptions, Network, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> condition_aware::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Network::<f64>::init(NetworkSpec::tiny(4), 1)?;
    let mut x = Tensor::<f64>::zeros(32, 32, 3);
    x.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let labels: Vec<u8> = (0..32 * 32).map(|_| rng.random_range(0..4)).collect();

    let layers = net.layers().len();
    let opts = GradCheckOptions {
        samples: 8 * layers,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&net, &x, &labels, &opts)?;
    for l in 0..layers {
        if let Some(e) = report.max_for_layer(l) {
            println!("layer {l:>2}: max relative error {e:.2e}");
        }
    }
    println!(
        "overall {:.2e} over {} parameters ({} skipped at kinks)",
        report.max_rel_error,
        report.samples.len(),
        report.skipped
    );
    Ok(())
}
