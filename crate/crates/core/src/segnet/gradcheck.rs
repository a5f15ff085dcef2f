use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::ops::softmax_cross_entropy;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            samples: 64,
            step: 1e-5,
            seed: 0,
        }
    }
}

/// One checked parameter. `index` counts weights first, then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub layer: usize,
    pub index: usize,
    pub backprop: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
    /// Parameters dropped because the ±step perturbation switched a ReLU or
    /// pooling decision, where the loss is not differentiable.
    pub skipped: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn max_for_layer(&self, layer: usize) -> Option<f64> {
        self.samples
            .iter()
            .filter(|s| s.layer == layer)
            .map(|s| s.rel_error)
            .reduce(f64::max)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn param(net: &mut Network<f64>, layer: usize, index: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights.len();
    if index < nw {
        &mut l.weights[index]
    } else {
        &mut l.bias[index - nw]
    }
}

/// Compares backprop gradients of the mean cross-entropy with central
/// differences on a random parameter subset. Every layer is sampled at
/// least once when `samples` allows it.
pub fn grad_check(
    net: &Network<f64>,
    image: &Tensor<f64>,
    labels: &[u8],
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, grads) = net.loss_and_gradients(image, labels, None)?;
    let sizes: Vec<usize> = net.layers().iter().map(|l| l.param_count()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::Config("network has no parameters".into()));
    }
    let locate = |flat: usize| {
        let mut rest = flat;
        for (layer, &n) in sizes.iter().enumerate() {
            if rest < n {
                return (layer, rest);
            }
            rest -= n;
        }
        unreachable!("flat index within total");
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    if options.samples >= sizes.len() {
        for (layer, &n) in sizes.iter().enumerate() {
            candidates.push((layer, rng.random_range(0..n)));
        }
    }
    let pool = total.min(options.samples * 32);
    candidates.extend(sample(&mut rng, total, pool).into_iter().map(locate));

    let mut work = net.clone();
    let mut samples = Vec::with_capacity(options.samples);
    let mut skipped = 0;
    let mut seen = std::collections::HashSet::new();
    for (layer, index) in candidates {
        if samples.len() == options.samples {
            break;
        }
        if !seen.insert((layer, index)) {
            continue;
        }
        let original = *param(&mut work, layer, index);
        let mut eval = |value: f64| -> Result<(f64, u64)> {
            *param(&mut work, layer, index) = value;
            let cache = work.forward_cached(image)?;
            let (loss, _) = softmax_cross_entropy(&cache.logits, labels, None);
            Ok((loss, cache.activation_signature()))
        };
        let (plus, sig_plus) = eval(original + options.step)?;
        let (minus, sig_minus) = eval(original - options.step)?;
        let (_, sig_base) = eval(original)?;
        if sig_plus != sig_base || sig_minus != sig_base {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * options.step);
        let g = &grads[layer];
        let backprop = if index < g.weights.len() {
            g.weights[index]
        } else {
            g.bias[index - g.weights.len()]
        };
        samples.push(GradSample {
            layer,
            index,
            backprop,
            numeric,
            rel_error: relative_error(backprop, numeric),
        });
    }
    let max_rel_error = samples.iter().map(|s| s.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        samples,
        skipped,
        max_rel_error,
    })
}
