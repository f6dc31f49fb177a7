//! Finite-difference gradient checks of every differentiable tape
//! operation, shared by the unit tests and the acceptance harness.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srea_core::tensor::{check_gradients, BnState, ConvSpec, GradCheckReport, Mode, Result, Tape, Tensor, Var};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

/// Worst finite-difference disagreement of one operation over its
/// random instances.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: String,
    pub instances: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// First failure to evaluate, if any.
    pub error: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.instances as u64 >= INSTANCES && self.max_rel_error < TOL
    }
}

pub fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

/// Values bounded away from zero, so kinks at 0 stay out of the difference
/// stencil.
pub fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let mut t = random(shape, 0.05, 1.5, rng);
    for v in t.data_mut() {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    t
}

/// Reduces `v` to a scalar through a fixed random weighting, so every output
/// entry influences the result (a plain sum would hide softmax gradients).
pub fn project(t: &mut Tape<f64>, v: Var) -> Result<Var> {
    let shape = t.shape(v).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(shape.iter().product::<usize>() as u64 + 17);
    let r = t.constant(random(&shape, -1.0, 1.0, &mut rng));
    let m = t.mul(v, r)?;
    Ok(t.sum(m))
}

impl Outcome {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            error: None,
        }
    }

    /// Folds one instance in; returns false once an instance failed to run.
    fn record(&mut self, seed: u64, r: Result<GradCheckReport>) -> bool {
        match r {
            Ok(r) if r.checked > 0 => {
                self.instances += 1;
                self.max_rel_error = self.max_rel_error.max(r.max_rel_error);
                self.max_abs_error = self.max_abs_error.max(r.max_abs_error);
            }
            Ok(_) => self.error = Some(format!("instance {seed}: nothing checked")),
            Err(e) => self.error = Some(format!("instance {seed}: {e}")),
        }
        self.error.is_none()
    }
}

/// Gradient checks on `INSTANCES` random instances from `make`.
fn check_op<M, F>(out: &mut Vec<Outcome>, name: &str, make: M, f: F)
where
    M: Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Copy,
{
    let mut o = Outcome::new(name);
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + name.len() as u64);
        let inputs = make(&mut rng);
        if !o.record(seed, check_gradients(&inputs, H, f)) {
            break;
        }
    }
    out.push(o);
}

pub fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

pub fn elementwise_binary(out: &mut Vec<Outcome>) {
    let make = |r: &mut ChaCha8Rng| {
        let s = [dims(r, 1, 4), dims(r, 1, 5)];
        vec![random(&s, -2.0, 2.0, r), away_from_zero(&s, r)]
    };
    check_op(out, "add", make, |t, v| {
        let y = t.add(v[0], v[1])?;
        project(t, y)
    });
    check_op(out, "sub", make, |t, v| {
        let y = t.sub(v[0], v[1])?;
        project(t, y)
    });
    check_op(out, "mul", make, |t, v| {
        let y = t.mul(v[0], v[1])?;
        project(t, y)
    });
    check_op(out, "div", make, |t, v| {
        let y = t.div(v[0], v[1])?;
        project(t, y)
    });
}

pub fn elementwise_unary(out: &mut Vec<Outcome>) {
    let any = |r: &mut ChaCha8Rng| vec![random(&[dims(r, 1, 4), dims(r, 1, 6)], -2.0, 2.0, r)];
    let kinked = |r: &mut ChaCha8Rng| vec![away_from_zero(&[dims(r, 1, 4), dims(r, 1, 6)], r)];
    let positive = |r: &mut ChaCha8Rng| vec![random(&[dims(r, 1, 4), dims(r, 1, 6)], 0.3, 3.0, r)];
    check_op(out, "scale", any, |t, v| {
        let y = t.scale(v[0], -1.7);
        project(t, y)
    });
    check_op(out, "add_scalar", any, |t, v| {
        let y = t.add_scalar(v[0], 0.4);
        project(t, y)
    });
    check_op(out, "neg", any, |t, v| {
        let y = t.neg(v[0]);
        project(t, y)
    });
    check_op(out, "exp", any, |t, v| {
        let y = t.exp(v[0]);
        project(t, y)
    });
    check_op(out, "square", any, |t, v| {
        let y = t.square(v[0]);
        project(t, y)
    });
    check_op(out, "ln", positive, |t, v| {
        let y = t.ln(v[0]);
        project(t, y)
    });
    check_op(out, "sqrt", positive, |t, v| {
        let y = t.sqrt(v[0]);
        project(t, y)
    });
    check_op(out, "relu", kinked, |t, v| {
        let y = t.relu(v[0]);
        project(t, y)
    });
    check_op(out, "clamp_min", kinked, |t, v| {
        let y = t.clamp_min(v[0], 0.0);
        project(t, y)
    });
}

pub fn reductions(out: &mut Vec<Outcome>) {
    let make = |r: &mut ChaCha8Rng| vec![random(&[dims(r, 1, 5), dims(r, 1, 5)], -2.0, 2.0, r)];
    check_op(out, "sum", make, |t, v| {
        let s = t.square(v[0]);
        Ok(t.sum(s))
    });
    check_op(out, "mean", make, |t, v| {
        let s = t.square(v[0]);
        t.mean(s)
    });
    check_op(out, "sum_last", make, |t, v| {
        let y = t.sum_last(v[0])?;
        project(t, y)
    });
    check_op(out, "mean_first", make, |t, v| {
        let y = t.mean_first(v[0])?;
        project(t, y)
    });
    check_op(out, "log_sum_exp", make, |t, v| {
        let y = t.log_sum_exp(v[0])?;
        project(t, y)
    });
    check_op(
        out,
        "log_sum_exp_vector",
        |r| vec![random(&[dims(r, 1, 6)], -3.0, 3.0, r)],
        |t, v| t.log_sum_exp(v[0]),
    );
}

pub fn matrix_ops(out: &mut Vec<Outcome>) {
    check_op(
        out,
        "matmul",
        |r| {
            let (n, k, m) = (dims(r, 1, 4), dims(r, 1, 4), dims(r, 1, 4));
            vec![random(&[n, k], -1.0, 1.0, r), random(&[k, m], -1.0, 1.0, r)]
        },
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "transpose",
        |r| vec![random(&[dims(r, 1, 4), dims(r, 1, 4)], -1.0, 1.0, r)],
        |t, v| {
            let y = t.transpose(v[0])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "reshape",
        |r| vec![random(&[2, dims(r, 1, 4) * 3], -1.0, 1.0, r)],
        |t, v| {
            let n = t.value(v[0]).len();
            let y = t.reshape(v[0], &[3, n / 3])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "pairwise_sq_dist",
        |r| {
            let (n, d, k) = (dims(r, 1, 4), dims(r, 1, 4), dims(r, 1, 4));
            vec![random(&[n, d], -1.0, 1.0, r), random(&[d, k], -1.0, 1.0, r)]
        },
        |t, v| {
            let y = t.pairwise_sq_dist(v[0], v[1])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "min_off_diagonal",
        |r| {
            // Well-separated entries keep the arg-min stable under the stencil.
            let k = dims(r, 2, 5);
            let mut vals: Vec<f64> = (0..k * k).map(|i| i as f64 * 0.1).collect();
            for i in (1..vals.len()).rev() {
                vals.swap(i, r.random_range(0..=i));
            }
            vec![Tensor::from_f64(&[k, k], &vals).unwrap()]
        },
        |t, v| {
            let y = t.min_off_diagonal(v[0])?;
            project(t, y)
        },
    );
}

pub fn softmax_and_gather(out: &mut Vec<Outcome>) {
    check_op(
        out,
        "softmax_rows",
        |r| vec![random(&[dims(r, 1, 4), dims(r, 2, 5)], -2.0, 2.0, r)],
        |t, v| {
            let y = t.softmax(v[0])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "softmax_vector",
        |r| vec![random(&[dims(r, 2, 6)], -2.0, 2.0, r)],
        |t, v| {
            let y = t.softmax(v[0])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "gather",
        |r| vec![random(&[4, dims(r, 2, 5)], -2.0, 2.0, r)],
        |t, v| {
            let m = t.shape(v[0])[1];
            let idx: Vec<usize> = (0..4).map(|i| (i * 3 + 1) % m).collect();
            let y = t.gather(v[0], &idx)?;
            project(t, y)
        },
    );
}

fn conv_case(r: &mut ChaCha8Rng, transpose: bool) -> (Vec<Tensor<f64>>, ConvSpec, bool) {
    let (b, ci, co, k) = (dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 4));
    let stride = dims(r, 1, 3);
    let padding = r.random_range(0..k);
    let mut spec = ConvSpec::new(stride, padding);
    let batched = r.random::<bool>();
    let len = if transpose {
        spec = spec.with_output_padding(r.random_range(0..stride));
        // Long enough that the output is non-empty after cropping.
        dims(r, 1 + padding, 6 + padding)
    } else {
        dims(r, k.saturating_sub(2 * padding).max(1), 9)
    };
    let x_shape: Vec<usize> = if batched { vec![b, ci, len] } else { vec![ci, len] };
    let w_shape = if transpose { [ci, co, k] } else { [co, ci, k] };
    (
        vec![random(&x_shape, -1.0, 1.0, r), random(&w_shape, -1.0, 1.0, r), random(&[co], -1.0, 1.0, r)],
        spec,
        batched,
    )
}

pub fn conv1d(out: &mut Vec<Outcome>) {
    conv(out, false);
}

pub fn conv_transpose1d(out: &mut Vec<Outcome>) {
    conv(out, true);
}

fn conv(out: &mut Vec<Outcome>, transpose: bool) {
    let name = if transpose { "conv_transpose1d" } else { "conv1d" };
    let mut o = Outcome::new(name);
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(if transpose { 2000 } else { 1000 } + seed);
        let (inputs, spec, _) = conv_case(&mut rng, transpose);
        let r = check_gradients(&inputs, H, |t, v| {
            let y = if transpose {
                t.conv_transpose1d(v[0], v[1], v[2], spec)?
            } else {
                t.conv1d(v[0], v[1], v[2], spec)?
            };
            project(t, y)
        });
        if !o.record(seed, r) {
            break;
        }
    }
    out.push(o);
}

pub fn dense(out: &mut Vec<Outcome>) {
    check_op(
        out,
        "dense_batched",
        |r| {
            let (b, i, o) = (dims(r, 1, 4), dims(r, 1, 5), dims(r, 1, 5));
            vec![random(&[b, i], -1.0, 1.0, r), random(&[o, i], -1.0, 1.0, r), random(&[o], -1.0, 1.0, r)]
        },
        |t, v| {
            let y = t.dense(v[0], v[1], v[2])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "dense_vector",
        |r| {
            let (i, o) = (dims(r, 1, 5), dims(r, 1, 5));
            vec![random(&[i], -1.0, 1.0, r), random(&[o, i], -1.0, 1.0, r), random(&[o], -1.0, 1.0, r)]
        },
        |t, v| {
            let y = t.dense(v[0], v[1], v[2])?;
            project(t, y)
        },
    );
}

pub fn batch_norm(out: &mut Vec<Outcome>) {
    for (name, rank3, mode) in [
        ("bn_train_3d", true, Mode::Train),
        ("bn_train_2d", false, Mode::Train),
        ("bn_eval_3d", true, Mode::Eval),
    ] {
        check_op(
            out,
            name,
            |r| {
                let (b, c, l) = (dims(r, 2, 4), dims(r, 1, 3), dims(r, 1, 4));
                let xs: Vec<usize> = if rank3 { vec![b, c, l] } else { vec![b, c] };
                vec![random(&xs, -2.0, 2.0, r), random(&[c], 0.5, 1.5, r), random(&[c], -1.0, 1.0, r)]
            },
            move |t, v| {
                let c = t.shape(v[1])[0];
                let mut state = BnState::new(c);
                state.running_mean = vec![0.3; c];
                state.running_var = vec![1.7; c];
                let y = t.batch_norm(v[0], v[1], v[2], &mut state, mode)?;
                project(t, y)
            },
        );
    }
}

pub fn pool_mask_dropout(out: &mut Vec<Outcome>) {
    check_op(
        out,
        "global_avg_pool",
        |r| vec![random(&[dims(r, 1, 3), dims(r, 1, 3), dims(r, 1, 5)], -1.0, 1.0, r)],
        |t, v| {
            let y = t.global_avg_pool(v[0])?;
            project(t, y)
        },
    );
    check_op(
        out,
        "mask",
        |r| vec![random(&[dims(r, 1, 3), 4], -1.0, 1.0, r)],
        |t, v| {
            let n = t.value(v[0]).len();
            let m = (0..n).map(|i| (i % 3) as f64 * 0.5).collect();
            let y = t.mask(v[0], m)?;
            project(t, y)
        },
    );
    check_op(
        out,
        "dropout",
        |r| vec![random(&[dims(r, 1, 3), 6], -1.0, 1.0, r)],
        |t, v| {
            // A fresh identically seeded stream keeps the mask fixed across
            // the difference stencil.
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let y = t.dropout(v[0], 0.3, &mut rng, Mode::Train)?;
            project(t, y)
        },
    );
}

pub fn composite_graph(out: &mut Vec<Outcome>) {
    check_op(
        out,
        "composite",
        |r| {
            let (n, d, k) = (dims(r, 2, 4), dims(r, 1, 3), dims(r, 2, 3));
            vec![random(&[n, d], -1.0, 1.0, r), random(&[d, k], -1.0, 1.0, r)]
        },
        |t, v| {
            // Reuses `v[0]` along two paths to exercise accumulation.
            let dist = t.pairwise_sq_dist(v[0], v[1])?;
            let neg = t.neg(dist);
            let p = t.softmax(neg)?;
            let lse = t.log_sum_exp(neg)?;
            let sq = t.square(v[0]);
            let rows = t.sum_last(sq)?;
            let a = t.add(lse, rows)?;
            let pe = t.add_scalar(p, 1e-3);
            let lp = t.ln(pe);
            let s1 = project(t, lp)?;
            let s2 = t.mean(a)?;
            t.add(s1, s2)
        },
    );
}

pub type Group = fn(&mut Vec<Outcome>);

/// Every group, in a fixed order.
pub const GROUPS: [(&str, Group); 11] = [
    ("elementwise_binary", elementwise_binary),
    ("elementwise_unary", elementwise_unary),
    ("reductions", reductions),
    ("matrix_ops", matrix_ops),
    ("softmax_and_gather", softmax_and_gather),
    ("conv1d", conv1d),
    ("conv_transpose1d", conv_transpose1d),
    ("dense", dense),
    ("batch_norm", batch_norm),
    ("pool_mask_dropout", pool_mask_dropout),
    ("composite_graph", composite_graph),
];
