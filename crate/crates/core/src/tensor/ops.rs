//! Neural-network layers as tape operations.

use rand::Rng;

use super::linalg::{bcl_to_cbl, cbl_to_bcl, col2im, gemm, im2col};
use super::tape::{ConvGeom, Op};
use super::{Result, Scalar, Tape, Tensor, TensorError, Var};

/// Stride and padding of a 1-D convolution.
///
/// `output_padding` only applies to transposed convolutions, where it adds
/// extra positions at the end so that odd lengths can be reproduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    /// Output length of a convolution over `len` positions.
    pub fn conv_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if self.stride == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / self.stride + 1)
    }

    /// Output length of a transposed convolution over `len` positions.
    pub fn transpose_len(&self, len: usize, kernel: usize) -> Option<usize> {
        if len == 0 || self.stride == 0 {
            return None;
        }
        ((len - 1) * self.stride + kernel + self.output_padding).checked_sub(2 * self.padding)
    }
}

/// Whether layers behave as during training or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running statistics of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BnState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::of(0.1),
            eps: T::of(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Splits `[B, C, L]` (or `[C, L]`, read as `B = 1`) into its extents.
fn bcl(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, l] => Ok((1, c, l)),
        [b, c, l] => Ok((b, c, l)),
        _ => Err(TensorError::Rank {
            op,
            expected: 3,
            got: shape.to_vec(),
        }),
    }
}

fn check(op: &'static str, axis: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(TensorError::Dimension {
            op,
            axis,
            expected,
            got,
        });
    }
    Ok(())
}

fn vector_len(op: &'static str, shape: &[usize]) -> Result<usize> {
    match *shape {
        [n] => Ok(n),
        _ => Err(TensorError::Rank {
            op,
            expected: 1,
            got: shape.to_vec(),
        }),
    }
}

impl<T: Scalar> Tape<T> {
    /// Strided 1-D convolution of `x[B, C_in, L]` with kernels
    /// `w[C_out, C_in, K]` plus bias `b[C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        const OP: &str = "conv1d";
        let xs = self.shape(x).to_vec();
        let (batch, c_in, len) = bcl(OP, &xs)?;
        let (c_out, wc, kernel) = match *self.shape(w) {
            [o, i, k] => (o, i, k),
            ref s => {
                return Err(TensorError::Rank {
                    op: OP,
                    expected: 3,
                    got: s.to_vec(),
                })
            }
        };
        check(OP, "in_channels", c_in, wc)?;
        check(OP, "out_channels", c_out, vector_len(OP, self.shape(b))?)?;
        let len_out = spec.conv_len(len, kernel).ok_or_else(|| TensorError::InvalidArgument {
            op: OP,
            msg: format!("length {len} too short for kernel {kernel} with padding {}", spec.padding),
        })?;
        let width = batch * len_out;
        let col = im2col(self.value(x).data(), batch, c_in, len, kernel, spec.stride, spec.padding, len_out);
        let mut y = vec![T::zero(); c_out * width];
        gemm(false, false, c_out, width, c_in * kernel, T::one(), self.value(w).data(), &col, T::zero(), &mut y);
        let bias = self.value(b).data();
        for (o, row) in y.chunks_mut(width).enumerate() {
            row.iter_mut().for_each(|v| *v += bias[o]);
        }
        let y = cbl_to_bcl(&y, batch, c_out, len_out);
        let shape: Vec<usize> = if xs.len() == 2 { vec![c_out, len_out] } else { vec![batch, c_out, len_out] };
        let geom = ConvGeom {
            batch,
            c_in,
            c_out,
            len_in: len,
            len_out,
            kernel,
            stride: spec.stride,
            padding: spec.padding,
        };
        Ok(self.push(Tensor::new(&shape, y)?, Op::Conv1d { x, w, b, geom, col }, &[x, w, b]))
    }

    /// Transposed 1-D convolution of `x[B, C_in, L]` with kernels
    /// `w[C_in, C_out, K]` plus bias `b[C_out]`; the exact adjoint of
    /// [`Tape::conv1d`] with the same kernels, followed by the bias.
    ///
    /// Output length is `(L − 1)·stride − 2·padding + K + output_padding`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        const OP: &str = "conv_transpose1d";
        let xs = self.shape(x).to_vec();
        let (batch, c_in, len) = bcl(OP, &xs)?;
        let (wc, c_out, kernel) = match *self.shape(w) {
            [i, o, k] => (i, o, k),
            ref s => {
                return Err(TensorError::Rank {
                    op: OP,
                    expected: 3,
                    got: s.to_vec(),
                })
            }
        };
        check(OP, "in_channels", c_in, wc)?;
        check(OP, "out_channels", c_out, vector_len(OP, self.shape(b))?)?;
        if spec.output_padding >= spec.stride.max(1) {
            return Err(TensorError::InvalidArgument {
                op: OP,
                msg: format!("output_padding {} must be below stride {}", spec.output_padding, spec.stride),
            });
        }
        let len_out = spec
            .transpose_len(len, kernel)
            .filter(|&l| l > 0)
            .ok_or_else(|| TensorError::InvalidArgument {
                op: OP,
                msg: format!("length {len} with kernel {kernel} gives an empty output"),
            })?;
        let width = batch * len;
        let xc = bcl_to_cbl(self.value(x).data(), batch, c_in, len);
        let mut cols = vec![T::zero(); c_out * kernel * width];
        gemm(true, false, c_out * kernel, width, c_in, T::one(), self.value(w).data(), &xc, T::zero(), &mut cols);
        let mut y = vec![T::zero(); batch * c_out * len_out];
        col2im(&cols, &mut y, batch, c_out, len_out, kernel, spec.stride, spec.padding, len);
        let bias = self.value(b).data();
        for (r, row) in y.chunks_mut(len_out).enumerate() {
            let bv = bias[r % c_out];
            row.iter_mut().for_each(|v| *v += bv);
        }
        let shape: Vec<usize> = if xs.len() == 2 { vec![c_out, len_out] } else { vec![batch, c_out, len_out] };
        let geom = ConvGeom {
            batch,
            c_in,
            c_out,
            len_in: len,
            len_out,
            kernel,
            stride: spec.stride,
            padding: spec.padding,
        };
        Ok(self.push(Tensor::new(&shape, y)?, Op::ConvTranspose1d { x, w, b, geom }, &[x, w, b]))
    }

    /// Batch normalization over axis 1 of `x[B, C]` or `x[B, C, L]`.
    ///
    /// In [`Mode::Train`] the batch statistics normalize the input and the
    /// running estimates are updated with the unbiased variance; in
    /// [`Mode::Eval`] the running estimates are used and left untouched.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, state: &mut BnState<T>, mode: Mode) -> Result<Var> {
        const OP: &str = "batch_norm";
        let xs = self.shape(x).to_vec();
        let (batch, channels, len) = match *xs {
            [b, c] => (b, c, 1),
            [b, c, l] => (b, c, l),
            _ => {
                return Err(TensorError::Rank {
                    op: OP,
                    expected: 3,
                    got: xs,
                })
            }
        };
        check(OP, "channels", channels, vector_len(OP, self.shape(gamma))?)?;
        check(OP, "channels", channels, vector_len(OP, self.shape(beta))?)?;
        check(OP, "channels", channels, state.channels())?;
        let train = mode == Mode::Train;
        let count = batch * len;
        if train && count < 2 {
            return Err(TensorError::DegenerateBatch { batch, len });
        }
        let xv = self.value(x).data();
        let (mean, inv_std) = if train {
            let n = T::of(count as f64);
            let mut mean = vec![T::zero(); channels];
            let mut var = vec![T::zero(); channels];
            for bi in 0..batch {
                for (ch, m) in mean.iter_mut().enumerate() {
                    let o = (bi * channels + ch) * len;
                    *m += xv[o..o + len].iter().copied().sum::<T>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            for bi in 0..batch {
                for ch in 0..channels {
                    let o = (bi * channels + ch) * len;
                    var[ch] += xv[o..o + len].iter().map(|&v| (v - mean[ch]) * (v - mean[ch])).sum::<T>();
                }
            }
            let unbiased = T::of(count as f64 / (count - 1) as f64);
            let m = state.momentum;
            let mut inv_std = Vec::with_capacity(channels);
            for ch in 0..channels {
                let biased = var[ch] / n;
                state.running_mean[ch] = (T::one() - m) * state.running_mean[ch] + m * mean[ch];
                state.running_var[ch] = (T::one() - m) * state.running_var[ch] + m * biased * unbiased;
                inv_std.push(T::one() / (biased + state.eps).sqrt());
            }
            (mean, inv_std)
        } else {
            let inv_std = state.running_var.iter().map(|&v| T::one() / (v + state.eps).sqrt()).collect();
            (state.running_mean.clone(), inv_std)
        };
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut y = vec![T::zero(); xv.len()];
        for bi in 0..batch {
            for ch in 0..channels {
                let o = (bi * channels + ch) * len;
                for l in o..o + len {
                    xhat[l] = (xv[l] - mean[ch]) * inv_std[ch];
                    y[l] = g[ch] * xhat[l] + bt[ch];
                }
            }
        }
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            channels,
            xhat,
            inv_std,
            train,
        };
        Ok(self.push(Tensor::new(&xs, y)?, op, &[x, gamma, beta]))
    }

    /// Fully connected layer `x·Wᵀ + b` for `x[B, n_in]` or `x[n_in]`,
    /// `w[n_out, n_in]`, `b[n_out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        const OP: &str = "dense";
        let xs = self.shape(x).to_vec();
        let (batch, n_in) = match *xs {
            [n] => (1, n),
            [b, n] => (b, n),
            _ => {
                return Err(TensorError::Rank {
                    op: OP,
                    expected: 2,
                    got: xs,
                })
            }
        };
        let (n_out, wn) = match *self.shape(w) {
            [o, i] => (o, i),
            ref s => {
                return Err(TensorError::Rank {
                    op: OP,
                    expected: 2,
                    got: s.to_vec(),
                })
            }
        };
        check(OP, "in_features", wn, n_in)?;
        check(OP, "out_features", n_out, vector_len(OP, self.shape(b))?)?;
        let mut y = vec![T::zero(); batch * n_out];
        gemm(false, true, batch, n_out, n_in, T::one(), self.value(x).data(), self.value(w).data(), T::zero(), &mut y);
        let bias = self.value(b).data();
        for row in y.chunks_mut(n_out) {
            row.iter_mut().zip(bias).for_each(|(v, &bv)| *v += bv);
        }
        let shape: Vec<usize> = if xs.len() == 1 { vec![n_out] } else { vec![batch, n_out] };
        let op = Op::Dense {
            x,
            w,
            b,
            batch,
            n_in,
            n_out,
        };
        Ok(self.push(Tensor::new(&shape, y)?, op, &[x, w, b]))
    }

    /// Inverted dropout: in train mode each entry is zeroed with probability
    /// `p` and survivors are scaled by `1/(1−p)`. Identity in eval mode.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R, mode: Mode) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArgument {
                op: "dropout",
                msg: format!("probability {p} outside [0, 1)"),
            });
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let y = Tensor::new(v.shape(), data)?;
        Ok(self.push(y, Op::Mask(x, mask), &[x]))
    }

    /// Elementwise product with a fixed mask.
    pub fn mask(&mut self, x: Var, mask: Vec<T>) -> Result<Var> {
        let v = self.value(x);
        check("mask", "length", v.len(), mask.len())?;
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let y = Tensor::new(v.shape(), data)?;
        Ok(self.push(y, Op::Mask(x, mask), &[x]))
    }

    /// Mean over the last axis: `[B, C, L] → [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (b, c, l) = match *self.shape(x) {
            [b, c, l] => (b, c, l),
            ref s => {
                return Err(TensorError::Rank {
                    op: "global_avg_pool",
                    expected: 3,
                    got: s.to_vec(),
                })
            }
        };
        if l == 0 {
            return Err(TensorError::InvalidArgument {
                op: "global_avg_pool",
                msg: "zero length".into(),
            });
        }
        let inv = T::one() / T::of(l as f64);
        let y = self.value(x).data().chunks(l).map(|r| r.iter().copied().sum::<T>() * inv).collect();
        Ok(self.push(Tensor::new(&[b, c], y)?, Op::GlobalAvgPool(x), &[x]))
    }
}
