//! Prints stage shapes of the full-size network on a 288×288 input.
//!
//! cargo run --release --example shape_chain

use condition_aware::classes::Task;
use condition_aware::segnet::{Network, NetworkSpec, Tensor};

fn main() -> condition_aware::Result<()> {
    for task in Task::ALL {
        let net = Network::<f32>::init(NetworkSpec::full(task.n_classes()), 0)?;
        let (logits, stages) = net.logits_with_stages(&Tensor::<f32>::zeros(288, 288, 3))?;
        println!("{} network: {} convolutions, {} parameters", task.name(), net.spec().conv_count(), net.param_count());
        for (i, (h, w, c)) in stages.iter().enumerate() {
            println!("  stage {i}: {h}×{w}×{c}");
        }
        println!("  output: {}×{}×{}", logits.h, logits.w, logits.c);
    }
    Ok(())
}
