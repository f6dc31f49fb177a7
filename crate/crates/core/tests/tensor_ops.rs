use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srea_core::tensor::{BnState, ConvSpec, Mode, Tape, Tensor, TensorError};

#[path = "common/gradcheck_cases.rs"]
mod cases;

use cases::{dims, random, Outcome};

fn assert_group(group: fn(&mut Vec<Outcome>)) {
    let mut out = Vec::new();
    group(&mut out);
    assert!(!out.is_empty());
    for o in out {
        assert!(o.passed(), "{o:?}");
    }
}

#[test]
fn gradcheck_elementwise_binary() {
    assert_group(cases::elementwise_binary);
}

#[test]
fn gradcheck_elementwise_unary() {
    assert_group(cases::elementwise_unary);
}

#[test]
fn gradcheck_reductions() {
    assert_group(cases::reductions);
}

#[test]
fn gradcheck_matrix_ops() {
    assert_group(cases::matrix_ops);
}

#[test]
fn gradcheck_softmax_and_gather() {
    assert_group(cases::softmax_and_gather);
}

#[test]
fn gradcheck_conv1d() {
    assert_group(cases::conv1d);
}

#[test]
fn gradcheck_conv_transpose1d() {
    assert_group(cases::conv_transpose1d);
}

#[test]
fn gradcheck_dense() {
    assert_group(cases::dense);
}

#[test]
fn gradcheck_batch_norm() {
    assert_group(cases::batch_norm);
}

#[test]
fn gradcheck_pool_mask_dropout() {
    assert_group(cases::pool_mask_dropout);
}

#[test]
fn gradcheck_composite_graph() {
    assert_group(cases::composite_graph);
}

fn f64s(t: &Tensor<f32>) -> Vec<f64> {
    t.to_f64_vec()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn t32(shape: &[usize], v: &[f64]) -> Tensor<f32> {
    Tensor::from_f64(shape, v).unwrap()
}

/// Straightforward nested-loop convolution used as an oracle.
fn naive_conv(x: &[f64], ci: usize, len: usize, w: &[f64], co: usize, k: usize, b: &[f64], spec: ConvSpec) -> Vec<f64> {
    let lo = (len + 2 * spec.padding - k) / spec.stride + 1;
    let mut y = vec![0.0; co * lo];
    for o in 0..co {
        for t in 0..lo {
            let mut acc = b[o];
            for c in 0..ci {
                for j in 0..k {
                    let pos = (t * spec.stride + j) as isize - spec.padding as isize;
                    if pos >= 0 && (pos as usize) < len {
                        acc += w[(o * ci + c) * k + j] * x[c * len + pos as usize];
                    }
                }
            }
            y[o * lo + t] = acc;
        }
    }
    y
}

/// Transposed convolution as zero-insertion upsampling followed by a full
/// correlation with the flipped kernel, then cropping.
fn upsample_then_convolve(x: &[f64], ci: usize, len: usize, w: &[f64], co: usize, k: usize, spec: ConvSpec) -> Vec<f64> {
    let up_len = (len - 1) * spec.stride + 1;
    let full = up_len + k - 1;
    let lo = full - 2 * spec.padding + spec.output_padding;
    let mut y = vec![0.0; co * lo];
    for o in 0..co {
        for t in 0..lo {
            let pos = t + spec.padding;
            let mut acc = 0.0;
            for c in 0..ci {
                for j in 0..k {
                    // full[pos] = Σ_j up[pos − j] · w[j]
                    if pos >= j && pos - j < up_len && (pos - j) % spec.stride == 0 {
                        acc += x[c * len + (pos - j) / spec.stride] * w[(c * co + o) * k + j];
                    }
                }
            }
            y[o * lo + t] = acc;
        }
    }
    y
}

#[test]
fn conv1d_examples() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(t32(&[1, 4], &[1.0, 2.0, 3.0, 4.0]));
    let w = t.constant(t32(&[1, 1, 2], &[1.0, 1.0]));
    let b = t.constant(t32(&[1], &[0.0]));
    let y = t.conv1d(x, w, b, ConvSpec::new(1, 0)).unwrap();
    assert_eq!(t.shape(y), &[1, 3]);
    assert_eq!(f64s(t.value(y)), vec![3.0, 5.0, 7.0]);

    let id = t.constant(t32(&[1, 1, 1], &[1.0]));
    let y = t.conv1d(x, id, b, ConvSpec::new(1, 0)).unwrap();
    assert_eq!(f64s(t.value(y)), vec![1.0, 2.0, 3.0, 4.0]);

    let zeros = t.constant(Tensor::zeros(&[2, 5]));
    let w = t.constant(t32(&[3, 2, 3], &[0.7; 18]));
    let c = t.constant(t32(&[3], &[1.5, -2.0, 0.25]));
    let y = t.conv1d(zeros, w, c, ConvSpec::new(2, 1)).unwrap();
    let v = f64s(t.value(y));
    let lo = t.shape(y)[1];
    for o in 0..3 {
        assert!(v[o * lo..(o + 1) * lo].iter().all(|&e| e == [1.5, -2.0, 0.25][o]));
    }
}

#[test]
fn conv1d_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let (ci, co, k) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 4));
        let spec = ConvSpec::new(dims(&mut rng, 1, 3), rng.random_range(0..k));
        let len = dims(&mut rng, k.max(1), 10);
        let x = random(&[ci, len], -1.0, 1.0, &mut rng);
        let w = random(&[co, ci, k], -1.0, 1.0, &mut rng);
        let b = random(&[co], -1.0, 1.0, &mut rng);
        let expect = naive_conv(x.data(), ci, len, w.data(), co, k, b.data(), spec);
        let mut t = Tape::<f64>::new();
        let (xv, wv, bv) = (t.constant(x), t.constant(w), t.constant(b));
        let y = t.conv1d(xv, wv, bv, spec).unwrap();
        assert!(close(t.value(y).data(), &expect, 1e-12));
    }
}

#[test]
fn conv1d_reports_the_mismatched_axis() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::zeros(&[2, 3, 8]));
    let w = t.constant(Tensor::zeros(&[4, 2, 3]));
    let b = t.constant(Tensor::zeros(&[4]));
    let err = t.conv1d(x, w, b, ConvSpec::new(1, 0)).unwrap_err();
    assert!(matches!(err, TensorError::Dimension { axis: "in_channels", expected: 3, got: 2, .. }), "{err:?}");
    let w = t.constant(Tensor::zeros(&[4, 3, 3]));
    let b = t.constant(Tensor::zeros(&[5]));
    let err = t.conv1d(x, w, b, ConvSpec::new(1, 0)).unwrap_err();
    assert!(matches!(err, TensorError::Dimension { axis: "out_channels", .. }), "{err:?}");
    let b = t.constant(Tensor::zeros(&[4]));
    let short = t.constant(Tensor::zeros(&[2, 3, 2]));
    assert!(t.conv1d(short, w, b, ConvSpec::new(1, 0)).is_err());
}

#[test]
fn conv_transpose1d_examples() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(t32(&[1, 4], &[1.0, -2.0, 3.0, 0.5]));
    let w = t.constant(t32(&[1, 1, 1], &[1.0]));
    let b = t.constant(t32(&[1], &[0.0]));
    let y = t.conv_transpose1d(x, w, b, ConvSpec::new(1, 0)).unwrap();
    assert_eq!(f64s(t.value(y)), vec![1.0, -2.0, 3.0, 0.5]);

    let x = t.constant(t32(&[1, 2], &[1.0, 2.0]));
    let w = t.constant(t32(&[1, 1, 2], &[1.0, 1.0]));
    let y = t.conv_transpose1d(x, w, b, ConvSpec::new(2, 0)).unwrap();
    assert_eq!(f64s(t.value(y)), vec![1.0, 1.0, 2.0, 2.0]);
}

#[test]
fn conv_transpose1d_matches_upsample_then_convolve() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let (ci, co, k) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 4));
        let stride = dims(&mut rng, 1, 3);
        let spec = ConvSpec::new(stride, rng.random_range(0..k)).with_output_padding(rng.random_range(0..stride));
        let len = dims(&mut rng, 1 + spec.padding, 6 + spec.padding);
        let x = random(&[ci, len], -1.0, 1.0, &mut rng);
        let w = random(&[ci, co, k], -1.0, 1.0, &mut rng);
        let expect = upsample_then_convolve(x.data(), ci, len, w.data(), co, k, spec);
        let mut t = Tape::<f64>::new();
        let (xv, wv, bv) = (t.constant(x), t.constant(w), t.constant(Tensor::zeros(&[co])));
        let y = t.conv_transpose1d(xv, wv, bv, spec).unwrap();
        assert_eq!(t.shape(y)[1], spec.transpose_len(len, k).unwrap());
        assert!(close(t.value(y).data(), &expect, 1e-12), "{spec:?}");
    }
}

#[test]
fn transpose_length_inverts_conv_length() {
    // With output padding `(L + 2p − K) mod s`, the transpose restores L.
    for len in 16..80 {
        for (k, s, p) in [(4, 2, 1), (3, 1, 1), (5, 3, 2), (2, 2, 0)] {
            let spec = ConvSpec::new(s, p);
            let lo = spec.conv_len(len, k).unwrap();
            let op = (len + 2 * p - k) % s;
            assert_eq!(spec.with_output_padding(op).transpose_len(lo, k), Some(len));
        }
    }
}

#[test]
fn conv_and_transpose_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let (b, ci, co, k) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 4), dims(&mut rng, 1, 4), dims(&mut rng, 1, 4));
        let spec = ConvSpec::new(dims(&mut rng, 1, 3), rng.random_range(0..k));
        let len = dims(&mut rng, k, 12);
        let lo = spec.conv_len(len, k).unwrap();
        // Output padding makes the transpose land on exactly `len` positions.
        let tspec = spec.with_output_padding(len - spec.transpose_len(lo, k).unwrap());
        if tspec.output_padding >= tspec.stride {
            continue;
        }
        let x = random(&[b, ci, len], -1.0, 1.0, &mut rng);
        let y = random(&[b, co, lo], -1.0, 1.0, &mut rng);
        let w = random(&[co, ci, k], -1.0, 1.0, &mut rng);
        let mut t = Tape::<f64>::new();
        let (xv, yv, wv) = (t.constant(x.clone()), t.constant(y.clone()), t.constant(w));
        let (zc, zt) = (t.constant(Tensor::zeros(&[co])), t.constant(Tensor::zeros(&[ci])));
        let cx = t.conv1d(xv, wv, zc, spec).unwrap();
        let ty = t.conv_transpose1d(yv, wv, zt, tspec).unwrap();
        let lhs: f64 = t.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(t.value(ty).data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-5 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn transpose_forward_equals_conv_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let (b, ci, co, k) = (dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 4));
        let spec = ConvSpec::new(dims(&mut rng, 1, 3), rng.random_range(0..k));
        let len = dims(&mut rng, k, 10);
        let lo = spec.conv_len(len, k).unwrap();
        let tspec = spec.with_output_padding(len - spec.transpose_len(lo, k).unwrap());
        if tspec.output_padding >= tspec.stride {
            continue;
        }
        let x = random(&[b, ci, len], -1.0, 1.0, &mut rng);
        let g = random(&[b, co, lo], -1.0, 1.0, &mut rng);
        let w = random(&[co, ci, k], -1.0, 1.0, &mut rng);

        let mut t = Tape::<f64>::new();
        let xv = t.param(x);
        let wv = t.constant(w.clone());
        let bv = t.constant(Tensor::zeros(&[co]));
        let gv = t.constant(g.clone());
        let y = t.conv1d(xv, wv, bv, spec).unwrap();
        let m = t.mul(y, gv).unwrap();
        let loss = t.sum(m);
        let grad = t.backward(loss).unwrap().wrt(xv);

        let mut t2 = Tape::<f64>::new();
        let (gv, wv, bv) = (t2.constant(g), t2.constant(w), t2.constant(Tensor::zeros(&[ci])));
        let tc = t2.conv_transpose1d(gv, wv, bv, tspec).unwrap();
        assert!(close(grad.data(), t2.value(tc).data(), 1e-12));
    }
}

#[test]
fn dense_examples() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(t32(&[2], &[2.0, 3.0]));
    let w = t.constant(t32(&[1, 2], &[1.0, 1.0]));
    let b = t.constant(t32(&[1], &[1.0]));
    let y = t.dense(x, w, b).unwrap();
    assert_eq!(f64s(t.value(y)), vec![6.0]);

    let eye = t.constant(t32(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let zero = t.constant(Tensor::zeros(&[2]));
    let y = t.dense(x, eye, zero).unwrap();
    assert_eq!(f64s(t.value(y)), vec![2.0, 3.0]);

    let bias = t.constant(t32(&[2], &[-1.0, 4.0]));
    let y = t.dense(zero, eye, bias).unwrap();
    assert_eq!(f64s(t.value(y)), vec![-1.0, 4.0]);

    let bad = t.constant(Tensor::zeros(&[3]));
    assert!(matches!(t.dense(bad, eye, zero), Err(TensorError::Dimension { .. })));
}

fn channel_moments(v: &[f64], b: usize, c: usize, l: usize) -> Vec<(f64, f64)> {
    (0..c)
        .map(|ch| {
            let vals: Vec<f64> = (0..b).flat_map(|bi| v[(bi * c + ch) * l..(bi * c + ch + 1) * l].to_vec()).collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            (m, var)
        })
        .collect()
}

#[test]
fn batch_norm_standardizes_per_channel() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (b, c, l) = (6, 3, 7);
    let x = random(&[b, c, l], -4.0, 9.0, &mut rng);
    let mut t = Tape::<f64>::new();
    let xv = t.constant(x.clone());
    let g = t.constant(Tensor::full(&[c], 1.0));
    let beta = t.constant(Tensor::zeros(&[c]));
    let mut st = BnState::new(c);
    let y = t.batch_norm(xv, g, beta, &mut st, Mode::Train).unwrap();
    for (m, v) in channel_moments(t.value(y).data(), b, c, l) {
        assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-5, "mean {m} var {v}");
    }
    // Running statistics move a tenth of the way toward the batch moments,
    // using the unbiased variance.
    let n = (b * l) as f64;
    for (ch, (m, v)) in channel_moments(x.data(), b, c, l).into_iter().enumerate() {
        assert!((st.running_mean[ch] - 0.1 * m).abs() < 1e-12);
        assert!((st.running_var[ch] - (0.9 + 0.1 * v * n / (n - 1.0))).abs() < 1e-12);
    }

    let g2 = t.constant(Tensor::full(&[c], 2.0));
    let b3 = t.constant(Tensor::full(&[c], 3.0));
    let y2 = t.batch_norm(y, g2, b3, &mut BnState::new(c), Mode::Train).unwrap();
    for (m, v) in channel_moments(t.value(y2).data(), b, c, l) {
        assert!((m - 3.0).abs() < 1e-5 && (v.sqrt() - 2.0).abs() < 1e-4, "mean {m} std {}", v.sqrt());
    }
}

#[test]
fn batch_norm_edge_cases() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::full(&[4, 2, 3], 5.0));
    let g = t.constant(Tensor::full(&[2], 1.0));
    let beta = t.constant(Tensor::zeros(&[2]));
    let y = t.batch_norm(x, g, beta, &mut BnState::new(2), Mode::Train).unwrap();
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));

    // Eval mode with identity statistics is the affine map alone.
    let x = t.constant(t32(&[2, 2], &[1.0, -2.0, 0.5, 4.0]));
    let g = t.constant(t32(&[2], &[2.0, -1.0]));
    let beta = t.constant(t32(&[2], &[0.5, 1.0]));
    let y = t.batch_norm(x, g, beta, &mut BnState::new(2), Mode::Eval).unwrap();
    let s = 1.0 / (1.0f64 + 1e-5).sqrt();
    let expect = [2.0 * s + 0.5, 2.0 * s + 1.0, 1.0 * s + 0.5, -4.0 * s + 1.0];
    assert!(close(&f64s(t.value(y)), &expect, 1e-6));

    let one = t.constant(Tensor::zeros(&[1, 2, 1]));
    let err = t.batch_norm(one, g, beta, &mut BnState::new(2), Mode::Train).unwrap_err();
    assert!(matches!(err, TensorError::DegenerateBatch { batch: 1, len: 1 }));
    assert!(t.batch_norm(one, g, beta, &mut BnState::new(2), Mode::Eval).is_ok());
}

#[test]
fn softmax_pool_and_dropout_examples() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::full(&[5], 0.3));
    let p = t.softmax(x).unwrap();
    assert!(f64s(t.value(p)).iter().all(|&v| (v - 0.2).abs() < 1e-7));

    let x = t.constant(t32(&[1, 1, 3], &[1.0, 2.0, 3.0]));
    let m = t.global_avg_pool(x).unwrap();
    assert_eq!(t.shape(m), &[1, 1]);
    assert_eq!(f64s(t.value(m)), vec![2.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = t.dropout(x, 0.0, &mut rng, Mode::Train).unwrap();
    assert_eq!(t.value(d), t.value(x));
    let d = t.dropout(x, 0.9, &mut rng, Mode::Eval).unwrap();
    assert_eq!(t.value(d), t.value(x));
    for bad in [-0.1, 1.0, 1.5] {
        assert!(t.dropout(x, bad, &mut rng, Mode::Train).is_err());
    }
}

#[test]
fn dropout_is_unbiased() {
    let n = 100_000;
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::full(&[n], 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for p in [0.2, 0.5] {
        let d = t.dropout(x, p, &mut rng, Mode::Train).unwrap();
        let v = t.value(d).data();
        let mean = v.iter().map(|&e| e as f64).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "p={p}: mean {mean}");
        let zeros = v.iter().filter(|&&e| e == 0.0).count() as f64 / n as f64;
        assert!((zeros - p).abs() < 0.01);
        let keep = (1.0 / (1.0 - p)) as f32;
        assert!(v.iter().all(|&e| e == 0.0 || e == keep));
    }
}

#[test]
fn backward_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::from_f64(&[4], &[1.0, -2.0, 0.5, 7.0]).unwrap());
    let s = t.sum(x);
    assert_eq!(t.backward(s).unwrap().wrt(x).data(), &[1.0; 4]);

    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::scalar(3.0));
    let y = t.mul(x, x).unwrap();
    assert_eq!(t.backward(y).unwrap().wrt(x).item(), 6.0);
}

#[test]
fn backward_accumulates_shared_paths_once() {
    // y = x + x, z = y·y = 4x², dz/dx = 8x.
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::scalar(1.5));
    let y = t.add(x, x).unwrap();
    let z = t.mul(y, y).unwrap();
    assert_eq!(t.backward(z).unwrap().wrt(x).item(), 12.0);
}

#[test]
fn backward_rejects_non_scalar_and_zero_fills_untouched() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::zeros(&[3]));
    let unused = t.param(Tensor::full(&[2, 2], 4.0));
    let c = t.constant(Tensor::scalar(2.0));
    assert!(matches!(t.backward(x), Err(TensorError::NonScalarLoss(_))));
    let s = t.sum(x);
    let loss = t.mul(s, c).unwrap();
    let g = t.backward(loss).unwrap();
    assert!(!g.touched(unused));
    assert_eq!(g.wrt(unused), Tensor::zeros(&[2, 2]));
    assert_eq!(g.wrt(x).data(), &[2.0; 3]);
    assert!(!g.touched(c));
}

#[test]
fn tape_evaluation_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t = Tape::<f32>::new();
        let x = t.param(random(&[3, 2, 16], -1.0, 1.0, &mut rng).cast());
        let w = t.param(random(&[4, 2, 4], -1.0, 1.0, &mut rng).cast());
        let b = t.param(Tensor::zeros(&[4]));
        let y = t.conv1d(x, w, b, ConvSpec::new(2, 1)).unwrap();
        let d = t.dropout(y, 0.2, &mut rng, Mode::Train).unwrap();
        let s = t.square(d);
        let l = t.mean(s).unwrap();
        let g = t.backward(l).unwrap();
        (t.value(l).item().to_bits(), g.wrt(w).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, logits in prop::collection::vec(-30.0f32..30.0, 2..8)) {
        let m = logits.len();
        let data: Vec<f32> = (0..rows).flat_map(|r| logits.iter().map(move |&v| v * (r as f32 + 1.0))).collect();
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::new(&[rows, m], data).unwrap());
        let p = t.softmax(x).unwrap();
        for row in t.value(p).data().chunks(m) {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_output_length_formula(len in 1usize..64, k in 1usize..6, s in 1usize..4, p in 0usize..3) {
        let spec = ConvSpec::new(s, p);
        prop_assume!(len + 2 * p >= k);
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::zeros(&[1, 1, len]));
        let w = t.constant(Tensor::zeros(&[1, 1, k]));
        let b = t.constant(Tensor::zeros(&[1]));
        let y = t.conv1d(x, w, b, spec).unwrap();
        prop_assert_eq!(t.shape(y)[2], (len + 2 * p - k) / s + 1);
    }
}
