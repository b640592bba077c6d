use inas_core::arch::{ArchPoint, BlockKind, BlockSpec};
use inas_core::data::{self, InputShape};
use inas_core::nn::{self, LayerKind, LayerRole, Mode, NetworkSpec, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_spec(arch: ArchPoint, dim: usize, width: usize, classes: usize, dropout: f64) -> NetworkSpec {
    let block = BlockSpec::reference(BlockKind::ResidualDense, width);
    NetworkSpec::new(arch, block, InputShape::Flat { dim }, classes, dropout).unwrap()
}

fn conv_spec(arch: ArchPoint) -> NetworkSpec {
    let block = BlockSpec::reference(BlockKind::ResidualConv, 3);
    NetworkSpec::new(arch, block, InputShape::Image { height: 5, width: 5, channels: 2 }, 3, 0.0).unwrap()
}

fn random_batch(n: usize, d: usize, classes: usize, seed: u64) -> (Vec<f32>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let y = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    (x, y)
}

/// Central differences on `coords` randomly chosen parameters.
fn check_gradient(spec: &NetworkSpec, mode: Mode, seed: u64, coords: usize) {
    let model = nn::instantiate(spec, seed).unwrap();
    let (x, y) = random_batch(6, spec.input_len(), spec.n_classes, seed + 100);
    let params = model.params().to_vec();
    let (_, grad) = model.loss_and_gradient(&params, &x, &y, mode, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    let h = 1e-6;
    for _ in 0..coords {
        let k = rng.gen_range(0..params.len());
        let mut plus = params.clone();
        plus[k] += h;
        let mut minus = params.clone();
        minus[k] -= h;
        let lp = model.loss_and_gradient(&plus, &x, &y, mode, seed).unwrap().0;
        let lm = model.loss_and_gradient(&minus, &x, &y, mode, seed).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        let rel = (numeric - grad[k]).abs() / (numeric.abs() + grad[k].abs()).max(1e-6);
        assert!(rel <= 1e-4, "param {k}: analytic {} numeric {numeric} rel {rel}", grad[k]);
    }
}

#[test]
fn dense_gradients_match_finite_differences() {
    for arch in [ArchPoint::new(1, 1), ArchPoint::new(2, 2)] {
        for seed in 0..3 {
            check_gradient(&dense_spec(arch, 5, 4, 3, 0.2), Mode::Train, seed, 12);
            check_gradient(&dense_spec(arch, 5, 4, 3, 0.2), Mode::Eval, seed, 12);
        }
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    for arch in [ArchPoint::new(1, 1), ArchPoint::new(1, 2)] {
        for seed in 0..3 {
            check_gradient(&conv_spec(arch), Mode::Train, seed, 12);
        }
    }
}

/// Closed-form parameter count of the dense family.
fn dense_param_oracle(i: usize, j: usize, dim: usize, width: usize, classes: usize) -> usize {
    let widths: Vec<usize> = (0..j).map(|k| width << k).collect();
    let mut total = dim * widths[0] + widths[0];
    for (k, &w) in widths.iter().enumerate() {
        if k > 0 {
            total += widths[k - 1] * w + w;
        }
        total += i * 2 * (w * w + w);
    }
    total + widths[j - 1] * classes + classes
}

#[test]
fn dense_param_counts_match_closed_form() {
    for i in 1..=4 {
        for j in 1..=3 {
            let spec = dense_spec(ArchPoint::new(i, j), 7, 4, 5, 0.1);
            let model = nn::instantiate(&spec, 0).unwrap();
            assert_eq!(model.param_count(), dense_param_oracle(i, j, 7, 4, 5), "({i},{j})");
            let layout = nn::layout(&spec).unwrap();
            assert_eq!(layout.layers().iter().filter(|l| l.counted).count(), i * j * 2 + 2);
        }
    }
}

#[test]
fn conv_param_counts_match_closed_form() {
    for i in 1..=3 {
        for j in 1..=3 {
            let spec = conv_spec(ArchPoint::new(i, j));
            let widths: Vec<usize> = (0..j).map(|k| 3 << k).collect();
            let mut expected = 9 * 2 * 3 + 2 * 3;
            for (k, &w) in widths.iter().enumerate() {
                if k > 0 {
                    expected += widths[k - 1] * w + 2 * w;
                }
                expected += i * 2 * (9 * w * w + 2 * w);
            }
            expected += widths[j - 1] * 3 + 3;
            assert_eq!(nn::instantiate(&spec, 1).unwrap().param_count(), expected, "({i},{j})");
        }
    }
}

#[test]
fn zeroed_block_is_the_identity() {
    let small = nn::instantiate(&dense_spec(ArchPoint::new(1, 1), 3, 4, 2, 0.0), 5).unwrap();
    let big_spec = dense_spec(ArchPoint::new(2, 1), 3, 4, 2, 0.0);
    let big = nn::instantiate(&big_spec, 9).unwrap();
    let mut params = big.params().to_vec();
    let small_layers = small.layout().layers();
    for layer in big.layout().layers() {
        let n = layer.param_count();
        let dst = &mut params[layer.offset..layer.offset + n];
        match small_layers.iter().find(|l| l.role == layer.role) {
            Some(src) => dst.copy_from_slice(&small.params()[src.offset..src.offset + n]),
            None => {
                assert!(matches!(layer.role, LayerRole::Block { block: 1, .. }));
                if matches!(layer.role, LayerRole::Block { layer: 1, .. }) {
                    dst.fill(0.0);
                }
            }
        }
    }
    let big = nn::ModelHandle::from_parts(big_spec, params, Vec::new(), false).unwrap();
    let (x, _) = random_batch(10, 3, 2, 0);
    let a = small.logits(&x).unwrap();
    let b = big.logits(&x).unwrap();
    assert_eq!(a.as_slice(), b.as_slice());
}

#[test]
fn conv_layers_have_no_bias() {
    let layout = nn::layout(&conv_spec(ArchPoint::new(2, 2))).unwrap();
    for l in layout.layers() {
        if let LayerKind::Conv { batch_norm, out_channels, .. } = l.kind {
            assert!(batch_norm);
            assert_eq!(l.shift_count(), 2 * out_channels);
        }
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let d = data::synth_blobs(3, 4, 30, 1.0, 2).unwrap();
    let spec = dense_spec(ArchPoint::new(1, 2), 4, 8, 3, 0.1);
    let cfg = TrainConfig { epochs: 3, nominal_epoch_size: 128, lr_decay_epochs: vec![], ..TrainConfig::default() };
    let a = nn::train(nn::instantiate(&spec, 1).unwrap(), &d, &cfg).unwrap();
    let b = nn::train(nn::instantiate(&spec, 1).unwrap(), &d, &cfg).unwrap();
    assert_eq!(a.params(), b.params());
    let c = nn::train(nn::instantiate(&spec, 1).unwrap(), &d, &cfg.with_seed(9)).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn oversampled_epochs_take_a_fixed_number_of_steps() {
    let spec = dense_spec(ArchPoint::new(1, 1), 2, 4, 2, 0.0);
    for n_per_class in [3, 40] {
        let d = data::synth_blobs(2, 2, n_per_class, 1.0, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 32,
            nominal_epoch_size: 200,
            lr_decay_epochs: vec![2],
            ..TrainConfig::default()
        };
        let m = nn::train(nn::instantiate(&spec, 0).unwrap(), &d, &cfg).unwrap();
        assert_eq!(m.sgd_steps(), 4 * 7);
        assert_eq!(m.epochs_trained(), 4);
        assert_eq!(m.train_history().len(), 4);
    }
}

#[test]
fn separable_blobs_are_learned() {
    let d = data::synth_blobs(4, 8, 100, 0.3, 11).unwrap();
    let spec = dense_spec(ArchPoint::new(1, 1), 8, 16, 4, 0.1);
    let cfg = TrainConfig { epochs: 10, lr_decay_epochs: vec![7], nominal_epoch_size: 1024, ..TrainConfig::default() };
    let m = nn::train(nn::instantiate(&spec, 3).unwrap(), &d, &cfg).unwrap();
    let err = nn::evaluate(&m, &d, nn::LossKind::ZeroOne).unwrap();
    assert!(err <= 0.05, "training error {err}");
}

#[test]
fn conv_network_trains_and_uses_running_stats() {
    let n = 40;
    let shape = InputShape::Image { height: 5, width: 5, channels: 2 };
    let (x, _) = random_batch(n, 50, 2, 4);
    let y: Vec<usize> = x.chunks(50).map(|r| usize::from(r.iter().sum::<f32>() > 0.0)).collect();
    let d = inas_core::data::Dataset::new("img", shape, x, y, 2).unwrap();
    let block = BlockSpec::reference(BlockKind::ResidualConv, 4);
    let spec = NetworkSpec::new(ArchPoint::new(1, 1), block, shape, 2, 0.1).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        nominal_epoch_size: 64,
        lr_initial: 0.05,
        lr_decay_epochs: vec![],
        augment: true,
        ..TrainConfig::default()
    };
    let init = nn::instantiate(&spec, 0).unwrap();
    let m = nn::train(init.clone(), &d, &cfg).unwrap();
    assert_ne!(m.buffers(), init.buffers());
    let p = m.predict_proba(d.features()).unwrap();
    assert!(p.iter_rows().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
}
