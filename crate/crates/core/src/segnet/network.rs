use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{
    conv2d_backward, conv2d_unchecked, maxpool2, maxpool2_backward, relu_backward, relu_in_place,
    softmax_cross_entropy, upsample_bilinear, upsample_bilinear_backward, ConvGrad, ConvLayer,
};
use super::spec::{ConvShape, NetworkSpec, Plan};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::labels::ProbabilityMap;

/// Parameter gradients in canonical layer order.
pub type Gradients<T> = Vec<ConvGrad<T>>;

/// A segmentation network: architecture plus weights.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    plan: Plan,
    layers: Vec<ConvLayer<T>>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Tensor<T>,
    acts: Vec<Tensor<T>>,
    pooled: Vec<Option<(Tensor<T>, Vec<u32>)>>,
    head_logits: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Head outputs before upsampling, in tap order.
    pub fn head_logits(&self) -> &[Tensor<T>] {
        &self.head_logits
    }

    /// Hash of every ReLU on/off state and pooling choice; equal signatures
    /// mean the network is the same piecewise-linear function locally.
    pub fn activation_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for a in &self.acts {
            for chunk in a.data.chunks(64) {
                let bits = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |b, (i, v)| b | (((*v > T::zero()) as u64) << i));
                mix(bits);
            }
        }
        for (_, arg) in self.pooled.iter().flatten() {
            for &i in arg {
                mix(i as u64);
            }
        }
        h
    }
}

impl<T: Scalar> Network<T> {
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let plan = spec.plan();
        let layers = plan
            .layers
            .iter()
            .map(|s| ConvLayer::zeros(s.k, s.s, s.c_in, s.c_out))
            .collect();
        Ok(Self { spec, plan, layers })
    }

    /// He-normal weights (σ = √(2 / fan_in)) and zero biases, drawn in
    /// canonical layer order from a ChaCha8 stream seeded with `seed`.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let normal = Normal::new(0.0, (2.0 / layer.fan_in() as f64).sqrt()).expect("positive sigma");
            for w in &mut layer.weights {
                *w = T::of(normal.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn from_layers(spec: NetworkSpec, layers: Vec<ConvLayer<T>>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if layers.len() != net.layers.len() {
            return Err(Error::Shape(format!(
                "architecture has {} layers, got {}",
                net.layers.len(),
                layers.len()
            )));
        }
        for (i, (have, want)) in layers.iter().zip(&net.plan.layers).enumerate() {
            let shape = ConvShape {
                k: have.k,
                s: have.s,
                c_in: have.c_in,
                c_out: have.c_out,
            };
            if shape != *want
                || have.weights.len() != want.k * want.k * want.c_in * want.c_out
                || have.bias.len() != want.c_out
            {
                return Err(Error::Shape(format!("layer {i}: expected {want:?}, got {shape:?}")));
            }
        }
        net.layers = layers;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// All convolutions in canonical order: trunk (Conv0 first), residual
    /// projections, heads.
    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            plan: self.plan.clone(),
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.layers.iter().map(ConvGrad::zeros_like).collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let m = self.spec.input_multiple();
        if x.c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.spec.in_channels, x.c
            )));
        }
        if x.h == 0 || x.w == 0 || !x.h.is_multiple_of(m) || !x.w.is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "input {}x{} must have sides that are positive multiples of {m}",
                x.h, x.w
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor<T>, keep: bool, trace: Option<&mut Vec<(usize, usize, usize)>>) -> Result<ForwardCache<T>> {
        self.check_input(x)?;
        let plan = &self.plan;
        let n = plan.trunk.len();
        let mut acts: Vec<Option<Tensor<T>>> = vec![None; n];
        let mut pooled = vec![None; n];
        let mut head_logits = Vec::with_capacity(plan.heads.len());
        let mut logits = Tensor::zeros(x.h, x.w, self.spec.n_classes);
        let mut trace = trace;

        for (j, step) in plan.trunk.iter().enumerate() {
            let layer = &self.layers[step.layer];
            let mut z = if j == 0 {
                conv2d_unchecked(layer, x)
            } else {
                let prev = acts[j - 1].as_ref().expect("previous activation");
                if step.pool_before {
                    let (p, arg) = maxpool2(prev);
                    let z = conv2d_unchecked(layer, &p);
                    if keep {
                        pooled[j] = Some((p, arg));
                    }
                    z
                } else {
                    conv2d_unchecked(layer, prev)
                }
            };
            if let Some((src, proj)) = step.residual {
                let source = acts[src].as_ref().expect("residual source");
                match proj {
                    Some(p) => z.add_assign(&conv2d_unchecked(&self.layers[p], source)),
                    None => z.add_assign(source),
                }
            }
            relu_in_place(&mut z);
            for head in plan.heads.iter().filter(|h| h.after == j) {
                let hl = conv2d_unchecked(&self.layers[head.layer], &z);
                logits.add_assign(&upsample_bilinear(&hl, head.factor));
                if keep {
                    head_logits.push(hl);
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                if plan.stage_ends.contains(&j) {
                    t.push(z.shape());
                }
            }
            acts[j] = Some(z);
            if !keep && j >= 2 {
                acts[j - 2] = None;
            }
        }
        Ok(ForwardCache {
            input: if keep { x.clone() } else { Tensor::zeros(0, 0, 0) },
            acts: if keep { acts.into_iter().map(|a| a.expect("kept")).collect() } else { Vec::new() },
            pooled,
            head_logits,
            logits,
        })
    }

    /// Summed, upsampled head logits at input resolution.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, false, None)?.logits)
    }

    /// Logits plus the output shape `(h, w, c)` of every stage.
    pub fn logits_with_stages(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<(usize, usize, usize)>)> {
        let mut trace = Vec::new();
        let logits = self.run(x, false, Some(&mut trace))?.logits;
        Ok((logits, trace))
    }

    /// Per-pixel class posteriors (softmax computed in f64).
    pub fn predict(&self, x: &Tensor<T>) -> Result<ProbabilityMap> {
        let logits = self.logits(x)?;
        let z: Vec<f64> = logits.data.iter().map(|v| v.f64()).collect();
        ProbabilityMap::from_logits(logits.w, logits.h, logits.c, &z)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.run(x, true, None)
    }

    /// Backpropagates `dlogits` through a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Gradients<T> {
        let plan = &self.plan;
        let mut grads = self.zero_gradients();
        let n = plan.trunk.len();
        let mut g: Vec<Option<Tensor<T>>> = vec![None; n];
        let accumulate = |slot: &mut Option<Tensor<T>>, t: Tensor<T>| match slot {
            Some(s) => s.add_assign(&t),
            None => *slot = Some(t),
        };

        for (head, hl) in plan.heads.iter().zip(&cache.head_logits) {
            let dh = upsample_bilinear_backward(dlogits, head.factor, hl.h, hl.w);
            let dx = conv2d_backward(
                &self.layers[head.layer],
                &cache.acts[head.after],
                &dh,
                &mut grads[head.layer],
                true,
            );
            accumulate(&mut g[head.after], dx.expect("input gradient"));
        }

        for j in (0..n).rev() {
            let Some(mut dz) = g[j].take() else { continue };
            relu_backward(&cache.acts[j], &mut dz);
            let step = &plan.trunk[j];
            if let Some((src, proj)) = step.residual {
                match proj {
                    Some(p) => {
                        let dx = conv2d_backward(&self.layers[p], &cache.acts[src], &dz, &mut grads[p], true);
                        accumulate(&mut g[src], dx.expect("input gradient"));
                    }
                    None => accumulate(&mut g[src], dz.clone()),
                }
            }
            if j == 0 {
                conv2d_backward(&self.layers[step.layer], &cache.input, &dz, &mut grads[step.layer], false);
            } else if let Some((p, arg)) = &cache.pooled[j] {
                let dp = conv2d_backward(&self.layers[step.layer], p, &dz, &mut grads[step.layer], true)
                    .expect("input gradient");
                accumulate(&mut g[j - 1], maxpool2_backward(&dp, arg, cache.acts[j - 1].shape()));
            } else {
                let dx = conv2d_backward(&self.layers[step.layer], &cache.acts[j - 1], &dz, &mut grads[step.layer], true)
                    .expect("input gradient");
                accumulate(&mut g[j - 1], dx);
            }
        }
        grads
    }

    /// Mean per-pixel cross-entropy and its parameter gradient for one image.
    pub fn loss_and_gradients(
        &self,
        x: &Tensor<T>,
        labels: &[u8],
        class_weights: Option<&[f64]>,
    ) -> Result<(f64, Gradients<T>)> {
        if labels.len() != x.h * x.w {
            return Err(Error::Shape(format!(
                "{} labels for a {}x{} image",
                labels.len(),
                x.w,
                x.h
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= self.spec.n_classes) {
            return Err(Error::Label(format!("label {l} with {} classes", self.spec.n_classes)));
        }
        let cache = self.forward_cached(x)?;
        let (loss, dlogits) = softmax_cross_entropy(&cache.logits, labels, class_weights);
        Ok((loss, self.backward(&cache, &dlogits)))
    }

    /// Loss only (no caches kept beyond what the residuals need).
    pub fn loss(&self, x: &Tensor<T>, labels: &[u8], class_weights: Option<&[f64]>) -> Result<f64> {
        let logits = self.logits(x)?;
        Ok(softmax_cross_entropy(&logits, labels, class_weights).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(h, w, 3, (0..h * w * 3).map(|_| rng.random::<f64>()).collect())
    }

    #[test]
    fn zero_weights_give_uniform_posteriors() {
        let net = Network::<f64>::zeros(NetworkSpec::tiny(4)).unwrap();
        let p = net.predict(&random_image(32, 32, 1)).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn input_must_be_a_multiple_of_sixteen() {
        let net = Network::<f32>::zeros(NetworkSpec::tiny(2)).unwrap();
        assert!(net.logits(&Tensor::zeros(24, 32, 3)).is_err());
        assert!(net.logits(&Tensor::zeros(32, 32, 1)).is_err());
    }

    #[test]
    fn tiny_stage_chain() {
        let net = Network::<f32>::init(NetworkSpec::tiny(4), 3).unwrap();
        let (logits, stages) = net.logits_with_stages(&random_image(64, 64, 2).cast()).unwrap();
        assert_eq!(stages, vec![(32, 32, 8), (16, 16, 8), (8, 8, 16), (4, 4, 16)]);
        assert_eq!(logits.shape(), (64, 64, 4));
    }

    #[test]
    fn inference_matches_cached_forward() {
        let net = Network::<f64>::init(NetworkSpec::tiny(3), 5).unwrap();
        let x = random_image(32, 32, 7);
        assert_eq!(net.logits(&x).unwrap(), net.forward_cached(&x).unwrap().logits);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let net = Network::<f64>::zeros(NetworkSpec::tiny(2)).unwrap();
        let x = random_image(32, 32, 1);
        assert!(net.loss_and_gradients(&x, &vec![2; 1024], None).is_err());
    }
}
