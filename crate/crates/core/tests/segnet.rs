mod common;

use condition_aware::segnet::*;
use condition_aware::Error;
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn conv_matches_direct_summation() {
    let mut r = rng(1);
    for &(k, s, h, w, ci, co) in &[
        (3, 1, 7, 5, 2, 3),
        (7, 2, 9, 10, 3, 4),
        (1, 2, 6, 5, 4, 2),
        (2, 1, 4, 4, 1, 1),
        (5, 3, 8, 7, 2, 2),
    ] {
        let layer = random_layer(&mut r, k, s, ci, co);
        let x = random_tensor(&mut r, h, w, ci);
        let fast = conv2d(&layer, &x).unwrap();
        let slow = naive_conv(&layer, &x);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-10, "k={k} s={s}: {a} vs {b}");
        }
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut r = rng(2);
    let layer = random_layer(&mut r, 3, 2, 2, 3);
    let x = random_tensor(&mut r, 5, 6, 2);
    let dy = random_tensor(&mut r, 3, 3, 3);
    let objective = |l: &ConvLayer<f64>, x: &Tensor<f64>| -> f64 {
        naive_conv(l, x).data.iter().zip(&dy.data).map(|(a, b)| a * b).sum()
    };
    let mut grad = ConvGrad::zeros_like(&layer);
    let dx = conv2d_backward(&layer, &x, &dy, &mut grad, true).unwrap();
    let h = 1e-6;
    for i in 0..layer.weights.len() {
        let (mut p, mut m) = (layer.clone(), layer.clone());
        p.weights[i] += h;
        m.weights[i] -= h;
        let num = (objective(&p, &x) - objective(&m, &x)) / (2.0 * h);
        assert!((num - grad.weights[i]).abs() < 1e-6);
    }
    for i in 0..layer.bias.len() {
        let (mut p, mut m) = (layer.clone(), layer.clone());
        p.bias[i] += h;
        m.bias[i] -= h;
        let num = (objective(&p, &x) - objective(&m, &x)) / (2.0 * h);
        assert!((num - grad.bias[i]).abs() < 1e-6);
    }
    for i in 0..x.data.len() {
        let (mut p, mut m) = (x.clone(), x.clone());
        p.data[i] += h;
        m.data[i] -= h;
        let num = (objective(&layer, &p) - objective(&layer, &m)) / (2.0 * h);
        assert!((num - dx.data[i]).abs() < 1e-6);
    }
}

#[test]
fn tiny_network_gradients_match_central_differences() {
    let mut r = rng(3);
    let net = Network::<f64>::init(NetworkSpec::tiny(4), 9).unwrap();
    let x = random_tensor(&mut r, 32, 32, 3);
    let labels: Vec<u8> = (0..32 * 32).map(|_| r.random_range(0..4)).collect();
    let report = grad_check(&net, &x, &labels, &GradCheckOptions::default()).unwrap();
    assert_eq!(report.samples.len(), 64);
    for layer in 0..net.layers().len() {
        assert!(report.max_for_layer(layer).is_some(), "layer {layer} unsampled");
    }
    assert!(report.max_rel_error < 1e-4, "max rel error {}", report.max_rel_error);
}

#[test]
fn training_reduces_loss_on_a_learnable_pattern() {
    let mut samples = Vec::new();
    for i in 0..4 {
        let mut img = Tensor::<f32>::zeros(32, 32, 3);
        let mut labels = vec![0u8; 32 * 32];
        for y in 0..32 {
            for x in 0..32 {
                let on = (x + i * 3) % 16 < 8;
                let px = (y * 32 + x) * 3;
                img.data[px] = if on { 1.0 } else { 0.0 };
                img.data[px + 1] = 0.5;
                labels[y * 32 + x] = on as u8;
            }
        }
        samples.push(TrainSample { image: img, labels });
    }
    let opts = TrainOptions {
        schedule: TrainSchedule::constant_betas(vec![(60, 1e-2), (20, 1e-3)]),
        seed: 4,
        class_weighting: false,
    };
    let a = train(NetworkSpec::tiny(2), &samples, &opts).unwrap();
    let first: f64 = a.losses[..5].iter().sum::<f64>() / 5.0;
    let last: f64 = a.losses[a.losses.len() - 5..].iter().sum::<f64>() / 5.0;
    assert!(last < 0.5 * first, "loss {first} -> {last}");
    let b = train(NetworkSpec::tiny(2), &samples, &opts).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.network.layers(), b.network.layers());
}

#[test]
fn checkpoint_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    let net = Network::<f32>::init(NetworkSpec::tiny(8), 77).unwrap();
    save_checkpoint(&path, &net).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let x = Tensor::from_vec(32, 32, 3, (0..32 * 32 * 3).map(|i| (i % 7) as f32 / 7.0).collect());
    assert_eq!(net.predict(&x).unwrap(), back.predict(&x).unwrap());
}

#[test]
fn wrong_input_size_is_a_shape_error() {
    let net = Network::<f32>::init(NetworkSpec::tiny(2), 0).unwrap();
    assert!(matches!(net.predict(&Tensor::zeros(30, 32, 3)), Err(Error::Shape(_))));
    assert!(matches!(net.predict(&Tensor::zeros(32, 32, 1)), Err(Error::Shape(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn posterior_is_a_distribution(seed in 0u64..1000, side in 1usize..3) {
        let n = side * 16;
        let net = Network::<f32>::init(NetworkSpec::tiny(4), seed).unwrap();
        let mut r = rng(seed);
        let x = Tensor::from_vec(n, n, 3, (0..n * n * 3).map(|_| r.random_range(0.0f32..1.0)).collect());
        let p = net.predict(&x).unwrap();
        prop_assert_eq!((p.width(), p.height(), p.n_classes()), (n, n, 4));
        for px in p.data().chunks(4) {
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn upsample_is_adjoint_of_its_backward(seed in 0u64..1000, f in 1usize..5) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, 3, 4, 2);
        let dy = random_tensor(&mut r, 3 * f, 4 * f, 2);
        let up = upsample_bilinear(&x, f);
        let back = upsample_bilinear_backward(&dy, f, 3, 4);
        let lhs: f64 = up.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }
}

#[test]
fn forward_matches_reference_implementation() {
    let mut r = rng(17);
    for n_classes in [2, 4, 8] {
        let mut net = Network::<f64>::init(NetworkSpec::tiny(n_classes), 100 + n_classes as u64).unwrap();
        // Nonzero biases so every bias path is exercised.
        for l in net.layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
        }
        let x = random_tensor(&mut r, 32, 32, 3);
        let expected = reference_forward(net.spec(), net.layers(), &x);
        let got = net.predict(&x).unwrap();
        for (px, e) in expected.iter().enumerate() {
            let g = got.pixel(px % 32, px / 32);
            for (a, b) in g.iter().zip(e) {
                assert!((a - b).abs() < 1e-10, "pixel {px}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn deepest_head_is_translation_consistent_in_the_interior() {
    let net = Network::<f64>::init(NetworkSpec::tiny(3), 5).unwrap();
    let mut r = rng(8);
    let (side, shift) = (320, 16);
    let wide = random_tensor(&mut r, side, side + shift, 3);
    let crop = |x0: usize| {
        let mut t = Tensor::<f64>::zeros(side, side, 3);
        for y in 0..side {
            let row = &wide.data[(y * (side + shift) + x0) * 3..(y * (side + shift) + x0 + side) * 3];
            t.data[y * side * 3..(y + 1) * side * 3].copy_from_slice(row);
        }
        t
    };
    let a = net.forward_cached(&crop(0)).unwrap();
    let b = net.forward_cached(&crop(shift)).unwrap();
    let (ha, hb) = (&a.head_logits()[2], &b.head_logits()[2]);
    assert_eq!((ha.h, ha.w), (20, 20));
    // Receptive-field radius is under 96 input pixels, i.e. 6 cells.
    let mut compared = 0;
    for y in 6..14 {
        for x in 6..13 {
            for c in 0..ha.c {
                assert_eq!(hb.at(y, x, c), ha.at(y, x + 1, c), "cell ({y},{x})");
                compared += 1;
            }
        }
    }
    assert_eq!(compared, 8 * 7 * 3);
    // Near the border the zero padding does break it.
    assert_ne!(hb.at(0, 0, 0), ha.at(0, 1, 0));
}

#[test]
fn pointwise_softmax_regression_gradient_has_closed_form() {
    let mut r = rng(21);
    let (h, w, c_in, n) = (4, 5, 3, 4);
    let layer = random_layer(&mut r, 1, 1, c_in, n);
    let x = random_tensor(&mut r, h, w, c_in);
    let labels: Vec<u8> = (0..h * w).map(|_| r.random_range(0..n as u8)).collect();
    let logits = conv2d(&layer, &x).unwrap();
    let (loss, dlogits) = softmax_cross_entropy(&logits, &labels, None);
    let mut grad = ConvGrad::zeros_like(&layer);
    conv2d_backward(&layer, &x, &dlogits, &mut grad, false);
    // Logistic regression: dL/dW[c][o] = mean_p x_pc (softmax_po - [y_p = o]).
    let mut expected_w = vec![0.0; c_in * n];
    let mut expected_b = vec![0.0; n];
    let mut expected_loss = 0.0;
    for p in 0..h * w {
        let z: Vec<f64> = (0..n)
            .map(|o| layer.bias[o] + (0..c_in).map(|c| layer.w(0, 0, c, o) * x.data[p * c_in + c]).sum::<f64>())
            .collect();
        let s: f64 = z.iter().map(|v| v.exp()).sum();
        expected_loss += s.ln() - z[labels[p] as usize];
        for o in 0..n {
            let d = z[o].exp() / s - if o == labels[p] as usize { 1.0 } else { 0.0 };
            expected_b[o] += d / (h * w) as f64;
            for c in 0..c_in {
                expected_w[c * n + o] += d * x.data[p * c_in + c] / (h * w) as f64;
            }
        }
    }
    assert!((loss - expected_loss / (h * w) as f64).abs() < 1e-10);
    for (a, b) in grad.weights.iter().zip(&expected_w).chain(grad.bias.iter().zip(&expected_b)) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn dead_relu_path_has_zero_gradient_on_both_sides() {
    let mut net = Network::<f64>::init(NetworkSpec::tiny(2), 3).unwrap();
    // Stem channel 0 never activates, so the weights reading it are inert.
    net.layers_mut()[0].bias[0] = -1e3;
    let mut r = rng(4);
    let x = random_tensor(&mut r, 32, 32, 3);
    let labels: Vec<u8> = (0..32 * 32).map(|_| r.random_range(0..2)).collect();
    let (_, grads) = net.loss_and_gradients(&x, &labels, None).unwrap();
    let conv1 = &net.layers()[1];
    let idx = (conv1.k + 1) * conv1.c_in * conv1.c_out; // tap (1,1), input channel 0, output 0
    assert_eq!(grads[1].weights[idx], 0.0);
    let h = 1e-5;
    let mut plus = net.clone();
    plus.layers_mut()[1].weights[idx] += h;
    let mut minus = net.clone();
    minus.layers_mut()[1].weights[idx] -= h;
    let numeric = (plus.loss(&x, &labels, None).unwrap() - minus.loss(&x, &labels, None).unwrap()) / (2.0 * h);
    assert_eq!(numeric, 0.0);
    assert_eq!(relative_error(grads[1].weights[idx], numeric), 0.0);
}

#[test]
fn tiny_network_memorizes_two_images() {
    use condition_aware::classes::Task;
    let views = small_views(96);
    let data = training_set(&[views[0].clone(), views[6].clone()], Task::Sb);
    let opts = TrainOptions {
        schedule: TrainSchedule::constant_betas(vec![(200, 5e-3), (100, 5e-4)]),
        seed: 1,
        class_weighting: false,
    };
    let out = train(NetworkSpec::tiny(8), &data, &opts).unwrap();
    assert_eq!(out.losses.len(), 300);
    let acc = pixel_accuracy(&out.network, &data).unwrap();
    assert!(acc >= 0.99, "training accuracy {acc}");
}
