use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::ops::ConvGrad;
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub iterations: usize,
    pub learning_rate: f64,
}

/// Piecewise-constant learning-rate schedule for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub phases: Vec<Phase>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    /// 1500 iterations at 1e-3, 750 at 1e-4, 500 at 1e-5, 250 at 1e-6.
    fn default() -> Self {
        Self::constant_betas(vec![(1500, 1e-3), (750, 1e-4), (500, 1e-5), (250, 1e-6)])
    }
}

impl TrainSchedule {
    pub fn constant_betas(phases: Vec<(usize, f64)>) -> Self {
        Self {
            phases: phases
                .into_iter()
                .map(|(iterations, learning_rate)| Phase {
                    iterations,
                    learning_rate,
                })
                .collect(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 4,
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.phases.iter().map(|p| p.iterations).sum()
    }

    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let mut end = 0;
        for p in &self.phases {
            end += p.iterations;
            if iteration < end {
                return p.learning_rate;
            }
        }
        self.phases.last().map_or(0.0, |p| p.learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("training schedule: {m}")));
        if self.phases.iter().any(|p| p.iterations == 0) {
            return bad("phase iteration counts must be positive");
        }
        if self.phases.iter().any(|p| !(p.learning_rate > 0.0 && p.learning_rate.is_finite())) {
            return bad("learning rates must be positive");
        }
        if self.phases.windows(2).any(|w| w[1].learning_rate > w[0].learning_rate) {
            return bad("learning rates must not increase across phases");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam parameters out of range");
        }
        Ok(())
    }
}

/// One training image (channels in [0, 1]) with per-pixel class ids.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Tensor<f32>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub schedule: TrainSchedule,
    pub seed: u64,
    /// Weight each pixel's loss by the inverse frequency of its class.
    pub class_weighting: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    /// Mean batch loss before each update.
    pub losses: Vec<f64>,
}

/// Adam state over all parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Gradients<f32>,
    v: Gradients<f32>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(net: &Network<f32>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: net.zero_gradients(),
            v: net.zero_gradients(),
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step(&mut self, net: &mut Network<f32>, grads: &Gradients<f32>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.epsilon * c2.sqrt()) as f32;
        for (((layer, g), m), v) in net.layers_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *p -= step * *mi / (vi.sqrt() + eps);
            }
        }
    }
}

fn class_weights(data: &[TrainSample], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for s in data {
        for &l in &s.labels {
            counts[l as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total as f64 / (n_classes as f64 * c as f64) })
        .collect()
}

fn validate_data(spec: &NetworkSpec, data: &[TrainSample]) -> Result<()> {
    let Some(first) = data.first() else {
        return Err(Error::Config("training set is empty".into()));
    };
    for (i, s) in data.iter().enumerate() {
        if (s.image.h, s.image.w) != (first.image.h, first.image.w) {
            return Err(Error::Shape(format!(
                "sample {i} is {}x{}, expected {}x{}",
                s.image.w, s.image.h, first.image.w, first.image.h
            )));
        }
        if s.labels.len() != s.image.h * s.image.w {
            return Err(Error::Shape(format!("sample {i}: label map size differs from image")));
        }
        if let Some(&l) = s.labels.iter().find(|&&l| l as usize >= spec.n_classes) {
            return Err(Error::Label(format!(
                "sample {i} has label {l} but the network has {} classes",
                spec.n_classes
            )));
        }
    }
    Ok(())
}

/// Initializes a network from `options.seed` and trains it.
pub fn train(spec: NetworkSpec, data: &[TrainSample], options: &TrainOptions) -> Result<TrainOutcome> {
    let net = Network::init(spec, options.seed)?;
    train_network(net, data, options)
}

/// Minimizes mean per-pixel cross-entropy with Adam. Batches come from a
/// seeded per-epoch shuffle; per-image gradients are summed in batch order,
/// so results do not depend on the thread count.
pub fn train_network(mut net: Network<f32>, data: &[TrainSample], options: &TrainOptions) -> Result<TrainOutcome> {
    let schedule = &options.schedule;
    schedule.validate()?;
    let total = schedule.total_iterations();
    if total == 0 {
        return Ok(TrainOutcome {
            network: net,
            losses: Vec::new(),
        });
    }
    validate_data(net.spec(), data)?;
    let weights = options
        .class_weighting
        .then(|| class_weights(data, net.spec().n_classes));

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let batch = schedule.batch_size.min(data.len());
    let mut adam = Adam::new(&net, schedule.beta1, schedule.beta2, schedule.epsilon);
    let mut losses = Vec::with_capacity(total);

    for it in 0..total {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let results: Vec<Result<(f64, Gradients<f32>)>> = idx
            .par_iter()
            .map(|&i| net.loss_and_gradients(&data[i].image, &data[i].labels, weights.as_deref()))
            .collect();
        let mut loss = 0.0;
        let mut grads: Option<Gradients<f32>> = None;
        for r in results {
            let (l, g) = r?;
            loss += l;
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
            }
        }
        loss /= batch as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        let mut grads = grads.expect("non-empty batch");
        let inv = 1.0 / batch as f32;
        grads.iter_mut().for_each(|g: &mut ConvGrad<f32>| g.scale(inv));
        adam.step(&mut net, &grads, schedule.learning_rate(it));
        if !net.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        losses.push(loss);
        log::debug!("iteration {it}: loss {loss:.6}");
    }
    Ok(TrainOutcome { network: net, losses })
}

/// Fraction of pixels whose argmax prediction equals the label.
pub fn pixel_accuracy(net: &Network<f32>, data: &[TrainSample]) -> Result<f64> {
    let per: Vec<Result<(usize, usize)>> = data
        .par_iter()
        .map(|s| {
            let pred = net.predict(&s.image)?.argmax();
            let hits = pred.data().iter().zip(&s.labels).filter(|(a, b)| a == b).count();
            Ok((hits, s.labels.len()))
        })
        .collect();
    let (mut hits, mut total) = (0, 0);
    for r in per {
        let (h, t) = r?;
        hits += h;
        total += t;
    }
    Ok(hits as f64 / total.max(1) as f64)
}
