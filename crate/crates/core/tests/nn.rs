use proptest::prelude::*;
use srea_core::nn::{batch_size_for, lr_at, Adam, AdamConfig, ModelConfig, ModelError, SreaModel, EPOCHS};
use srea_core::rng::{substream, Stream};
use srea_core::tensor::{Mode, Tape, Tensor};

fn model(channels: usize, len: usize, k: usize) -> SreaModel {
    SreaModel::new(ModelConfig::new(channels, len, k), &mut substream(3, Stream::Init)).unwrap()
}

fn input(b: usize, c: usize, l: usize) -> Tensor<f32> {
    let data = (0..b * c * l).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
    Tensor::new(&[b, c, l], data).unwrap()
}

#[test]
fn output_shapes_follow_the_architecture() {
    for (c, l, k) in [(3, 36, 5), (1, 128, 3), (2, 16, 2), (1, 45, 4)] {
        let mut m = model(c, l, k);
        let mut tape = Tape::new();
        let p = m.bind(&mut tape);
        let x = tape.constant(input(2, c, l));
        let out = m.forward(&mut tape, &p, x, Mode::Train, &mut substream(0, Stream::Dropout), true).unwrap();
        assert_eq!(tape.shape(out.embedding), &[2, 32]);
        assert_eq!(tape.shape(out.logits), &[2, k]);
        assert_eq!(tape.shape(out.reconstruction.unwrap()), &[2, c, l]);
        assert_eq!(tape.shape(out.centers), &[32, k]);
    }
}

#[test]
fn parameter_shapes() {
    let m = model(3, 36, 5);
    let shape = |n: &str| m.param(n).unwrap().shape().to_vec();
    assert_eq!(shape("encoder.0.weight"), [128, 3, 4]);
    assert_eq!(shape("encoder.1.weight"), [128, 128, 4]);
    assert_eq!(shape("encoder.2.weight"), [256, 128, 4]);
    assert_eq!(shape("encoder.3.weight"), [256, 256, 4]);
    assert_eq!(shape("encoder.3.bn.gamma"), [256]);
    assert_eq!(shape("embedding.weight"), [32, 256]);
    // 36 / 16 = 2 positions after the upsampling layer.
    assert_eq!(shape("decoder.upsample.weight"), [64, 32]);
    assert_eq!(shape("decoder.0.weight"), [32, 256, 4]);
    assert_eq!(shape("decoder.1.weight"), [256, 128, 4]);
    assert_eq!(shape("decoder.2.weight"), [128, 128, 4]);
    assert_eq!(shape("decoder.3.weight"), [128, 3, 4]);
    assert_eq!(shape("classifier.hidden.weight"), [128, 32]);
    assert_eq!(shape("classifier.output.weight"), [5, 128]);
    assert_eq!(shape("centers"), [32, 5]);
    assert_eq!(m.stage_lengths(), [36, 18, 9, 4, 2]);
}

#[test]
fn initialization_bounds() {
    let m = model(1, 32, 3);
    for (name, t) in m.param_names().iter().zip(m.params()) {
        let max = t.data().iter().fold(0.0f32, |a, &v| a.max(v.abs()));
        if name.ends_with(".bias") || name.ends_with(".bn.beta") {
            assert_eq!(max, 0.0, "{name}");
        } else if name.ends_with(".bn.gamma") {
            assert!(t.data().iter().all(|&v| v == 1.0));
        } else if name == "centers" {
            assert!(max <= 0.1);
        } else {
            let s = t.shape();
            // Fan-in is dim 1 times the kernel extent, if any.
            let fan_in = s[1] * s.get(2).copied().unwrap_or(1);
            let bound = 1.0 / (fan_in as f32).sqrt();
            assert!(max <= bound && max > 0.5 * bound, "{name}: {max} vs {bound}");
        }
    }
}

#[test]
fn rejects_invalid_configurations() {
    let mut rng = substream(0, Stream::Init);
    assert!(matches!(SreaModel::new(ModelConfig::new(1, 15, 2), &mut rng), Err(ModelError::TooShort(15))));
    assert!(matches!(SreaModel::new(ModelConfig::new(1, 32, 1), &mut rng), Err(ModelError::Classes(1))));
    let mut bad = ModelConfig::new(1, 32, 2);
    bad.dropout = 1.0;
    assert!(SreaModel::new(bad, &mut rng).is_err());
    assert!(SreaModel::new(ModelConfig::new(0, 32, 2), &mut rng).is_err());
}

#[test]
fn eval_forward_is_deterministic_and_ignores_dropout() {
    let mut m = model(2, 40, 3);
    let x = input(3, 2, 40);
    let (e1, p1) = m.predict(x.data(), 3, 2).unwrap();
    let (e2, p2) = m.predict(x.data(), 3, 3).unwrap();
    assert_eq!(e1, e2);
    assert_eq!(p1, p2);
    for row in p1.chunks(3) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let mut m = model(1, 32, 3);
    // One train-mode pass moves the running statistics away from defaults.
    let mut tape = Tape::new();
    let p = m.bind(&mut tape);
    let x = tape.constant(input(4, 1, 32));
    m.forward(&mut tape, &p, x, Mode::Train, &mut substream(1, Stream::Dropout), true).unwrap();
    drop(tape);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    m.save(&path).unwrap();
    let mut back = SreaModel::load(&path).unwrap();
    assert_eq!(back.param_names(), m.param_names());
    for (a, b) in m.params().iter().zip(back.params()) {
        assert_eq!(a, b);
    }
    let xs = input(4, 1, 32);
    assert_eq!(m.predict(xs.data(), 4, 4).unwrap(), back.predict(xs.data(), 4, 4).unwrap());
    let mut recs = m.to_records();
    recs.retain(|r| r.name != "centers");
    assert!(SreaModel::from_records(&recs).is_err());
}

#[test]
fn learning_rate_and_batch_size_rules() {
    assert_eq!(lr_at(0), 0.01);
    assert_eq!(lr_at(19), 0.01);
    assert_eq!(lr_at(20), 0.005);
    assert_eq!(lr_at(99), 0.000625);
    for e in 1..EPOCHS {
        assert!(lr_at(e) <= lr_at(e - 1) && lr_at(e) > 0.0);
    }
    assert_eq!(batch_size_for(930), 93);
    assert_eq!(batch_size_for(744), 74);
    assert_eq!(batch_size_for(10_000), 128);
    assert_eq!(batch_size_for(5), 1);
    assert_eq!(batch_size_for(1), 1);
}

fn scalar_param(v: f32) -> Vec<Tensor<f32>> {
    vec![Tensor::new(&[1], vec![v]).unwrap()]
}

#[test]
fn adam_zero_gradient_without_decay_is_a_no_op() {
    let cfg = AdamConfig {
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    let mut p = vec![Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
    let before = p.clone();
    let mut adam = Adam::new(cfg, &p);
    for _ in 0..3 {
        adam.step(&mut p, &[Tensor::zeros(&[3])], 0.01);
    }
    assert_eq!(p, before);
    assert_eq!(adam.steps(), 3);
}

#[test]
fn adam_decay_with_zero_gradient_shrinks_by_lr_times_decay() {
    let mut p = scalar_param(2.0);
    let mut adam = Adam::new(AdamConfig::default(), &p);
    adam.step(&mut p, &scalar_param(0.0), 0.01);
    let expect = 2.0 - 0.01 * 1e-4 * 2.0;
    assert!((p[0].data()[0] as f64 - expect).abs() < 1e-7);
}

/// Hand-rolled bias-corrected Adam in f64.
fn adam_oracle(p0: f64, grads: &[f64], lr: f64, wd: f64, coupled: bool) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-6);
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    let mut out = Vec::new();
    for (t, &g0) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        let g = if coupled { g0 + wd * p } else { g0 };
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        if !coupled {
            p -= lr * wd * p;
        }
        p -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(p);
    }
    out
}

#[test]
fn adam_two_step_trace_matches_oracle() {
    for (coupled, wd) in [(false, 0.0), (false, 1e-4), (true, 1e-4), (true, 0.5)] {
        let cfg = AdamConfig {
            weight_decay: wd,
            coupled_weight_decay: coupled,
            ..AdamConfig::default()
        };
        let grads = [0.5, 0.5];
        let mut p = scalar_param(1.0);
        let mut adam = Adam::new(cfg, &p);
        let expect = adam_oracle(1.0, &grads, 0.01, wd, coupled);
        for (g, e) in grads.iter().zip(expect) {
            adam.step(&mut p, &scalar_param(*g as f32), 0.01);
            assert!((p[0].data()[0] as f64 - e).abs() < 1e-6, "coupled={coupled} wd={wd}");
        }
    }
    // With a constant gradient and no decay, each early step moves by ~lr.
    let e = adam_oracle(1.0, &[0.5, 0.5], 0.01, 0.0, false);
    assert!((e[0] - 0.99).abs() < 1e-6 && (e[1] - 0.98).abs() < 1e-6);
}

proptest! {
    #[test]
    fn decoder_restores_input_shape(c in 1usize..3, l in 16usize..70) {
        let mut m = model(c, l, 2);
        let mut tape = Tape::new();
        let p = m.bind(&mut tape);
        let x = tape.constant(input(2, c, l));
        let out = m.forward(&mut tape, &p, x, Mode::Eval, &mut substream(0, Stream::Dropout), true).unwrap();
        prop_assert_eq!(tape.shape(out.reconstruction.unwrap()), &[2, c, l]);
        prop_assert_eq!(tape.shape(out.embedding), &[2, 32]);
    }

    #[test]
    fn adam_step_reduces_a_convex_quadratic(
        start in prop::collection::vec(-5.0f32..5.0, 1..6),
        lr in 1e-4f64..0.01,
    ) {
        // f(p) = Σ (p − 1)², gradient 2(p − 1).
        let f = |p: &[f32]| p.iter().map(|&v| ((v - 1.0) as f64).powi(2)).sum::<f64>();
        prop_assume!(f(&start) > 1e-3);
        let mut p = vec![Tensor::new(&[start.len()], start.clone()).unwrap()];
        let g: Vec<f32> = start.iter().map(|&v| 2.0 * (v - 1.0)).collect();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[Tensor::new(&[g.len()], g).unwrap()], lr);
        prop_assert!(f(p[0].data()) < f(&start));
    }
}
