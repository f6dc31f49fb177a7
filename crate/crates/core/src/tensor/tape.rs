use super::linalg::{bcl_to_cbl, cbl_to_bcl, col2im, gemm, im2col};
use super::{Result, Scalar, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Relu(Var),
    ClampMin(Var, T),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    MeanFirst(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Softmax(Var),
    LogSumExp(Var),
    Gather(Var, Vec<usize>),
    PairwiseSqDist(Var, Var),
    MinOffDiag(Var, Vec<usize>),
    Reshape(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        col: Vec<T>,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        channels: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
        batch: usize,
        n_in: usize,
        n_out: usize,
    },
    Mask(Var, Vec<T>),
    GlobalAvgPool(Var),
}

/// Geometry shared by a convolution and its transpose.
///
/// For `Conv1d`, `len_in`/`len_out` are input/output lengths of the
/// convolution. For `ConvTranspose1d` they describe the *transposed* op, so
/// the unfolded "positions" are the input positions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Define-by-run computation graph.
pub struct Tape<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::Incompatible {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let v = self.zip(a, b, |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.ln());
        self.push(v, Op::Ln(a), &[a])
    }

    /// Square root; the derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.sqrt());
        self.push(v, Op::Sqrt(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a), &[a])
    }

    /// `max(a, floor)`; no gradient flows through clamped entries.
    pub fn clamp_min(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).map(|x| if x < floor { floor } else { x });
        self.push(v, Op::ClampMin(a, floor), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "mean",
                msg: "empty tensor".into(),
            });
        }
        let s: T = t.data().iter().copied().sum();
        let m = s / T::of(t.len() as f64);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), &[a]))
    }

    fn matrix(&self, op: &'static str, a: Var) -> Result<(usize, usize)> {
        match *self.shape(a) {
            [n, m] => Ok((n, m)),
            ref s => Err(TensorError::Rank {
                op,
                expected: 2,
                got: s.to_vec(),
            }),
        }
    }

    /// Row sums of `a[n, m]`, giving `[n]`.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("sum_last", a)?;
        let d = self.value(a).data();
        let out = (0..n).map(|i| d[i * m..(i + 1) * m].iter().copied().sum()).collect();
        Ok(self.push(Tensor::new(&[n], out)?, Op::SumLast(a), &[a]))
    }

    /// Column means of `a[n, m]`, giving `[m]`.
    pub fn mean_first(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("mean_first", a)?;
        if n == 0 {
            return Err(TensorError::InvalidArgument {
                op: "mean_first",
                msg: "no rows".into(),
            });
        }
        let d = self.value(a).data();
        let mut out = vec![T::zero(); m];
        for row in d.chunks(m) {
            out.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
        }
        let inv = T::one() / T::of(n as f64);
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(Tensor::new(&[m], out)?, Op::MeanFirst(a), &[a]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix("matmul", a)?;
        let (k2, m) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(TensorError::Dimension {
                op: "matmul",
                axis: "inner",
                expected: k,
                got: k2,
            });
        }
        let mut out = vec![T::zero(); n * m];
        gemm(
            false,
            false,
            n,
            m,
            k,
            T::one(),
            self.value(a).data(),
            self.value(b).data(),
            T::zero(),
            &mut out,
        );
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("transpose", a)?;
        let d = self.value(a).data();
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = d[i * m + j];
            }
        }
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::Transpose(a), &[a]))
    }

    fn rows(&self, op: &'static str, a: Var) -> Result<(usize, usize)> {
        match *self.shape(a) {
            [m] => Ok((1, m)),
            [n, m] => Ok((n, m)),
            ref s => Err(TensorError::Rank {
                op,
                expected: 2,
                got: s.to_vec(),
            }),
        }
    }

    /// Softmax along the last axis of a vector or matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (_, m) = self.rows("softmax", a)?;
        let t = self.value(a);
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(m) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(&shape, out)?, Op::Softmax(a), &[a]))
    }

    /// `log Σ exp` along the last axis: `[n, m] → [n]`, `[m] → []`.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.rows("log_sum_exp", a)?;
        let rank = self.shape(a).len();
        let d = self.value(a).data();
        let out: Vec<T> = d
            .chunks(m)
            .map(|row| {
                let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln()
            })
            .collect();
        let shape: &[usize] = if rank == 1 { &[] } else { &[n] };
        Ok(self.push(Tensor::new(shape, out)?, Op::LogSumExp(a), &[a]))
    }

    /// Picks `a[i, index[i]]` from each row.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (n, m) = self.matrix("gather", a)?;
        if index.len() != n {
            return Err(TensorError::Dimension {
                op: "gather",
                axis: "rows",
                expected: n,
                got: index.len(),
            });
        }
        if let Some(&bad) = index.iter().find(|&&j| j >= m) {
            return Err(TensorError::InvalidArgument {
                op: "gather",
                msg: format!("column {bad} out of range for {m} columns"),
            });
        }
        let d = self.value(a).data();
        let out = index.iter().enumerate().map(|(i, &j)| d[i * m + j]).collect();
        Ok(self.push(Tensor::new(&[n], out)?, Op::Gather(a, index.to_vec()), &[a]))
    }

    /// Squared Euclidean distances between rows of `x[n, d]` and columns of
    /// `c[d, k]`, giving `[n, k]`.
    pub fn pairwise_sq_dist(&mut self, x: Var, c: Var) -> Result<Var> {
        let (n, d) = self.matrix("pairwise_sq_dist", x)?;
        let (d2, k) = self.matrix("pairwise_sq_dist", c)?;
        if d != d2 {
            return Err(TensorError::Dimension {
                op: "pairwise_sq_dist",
                axis: "feature",
                expected: d,
                got: d2,
            });
        }
        let (xv, cv) = (self.value(x).data(), self.value(c).data());
        let mut out = vec![T::zero(); n * k];
        for i in 0..n {
            for f in 0..d {
                let xi = xv[i * d + f];
                for j in 0..k {
                    let diff = xi - cv[f * k + j];
                    out[i * k + j] += diff * diff;
                }
            }
        }
        Ok(self.push(Tensor::new(&[n, k], out)?, Op::PairwiseSqDist(x, c), &[x, c]))
    }

    /// For square `a[k, k]`, the row minimum excluding the diagonal.
    pub fn min_off_diagonal(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix("min_off_diagonal", a)?;
        if n != m || n < 2 {
            return Err(TensorError::InvalidArgument {
                op: "min_off_diagonal",
                msg: format!("need a square matrix of side >= 2, got {n}x{m}"),
            });
        }
        let d = self.value(a).data();
        let mut arg = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut best = if i == 0 { 1 } else { 0 };
            for j in 0..n {
                if j != i && d[i * n + j] < d[i * n + best] {
                    best = j;
                }
            }
            arg.push(best);
            out.push(d[i * n + best]);
        }
        Ok(self.push(Tensor::new(&[n], out)?, Op::MinOffDiag(a, arg), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    /// Runs reverse-mode differentiation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.backprop_node(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let shapes = self.nodes[..=loss.0]
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += *x),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let out = self.nodes[i].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, g.iter().zip(vb).map(|(&x, &y)| x * y).collect());
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, g.iter().zip(va).map(|(&x, &y)| x * y).collect());
                }
            }
            Op::Div(a, b) => {
                let vb = val(*b);
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, g.iter().zip(vb).map(|(&x, &y)| x / y).collect());
                }
                if self.nodes[b.0].requires_grad {
                    let gb = g
                        .iter()
                        .zip(out)
                        .zip(vb)
                        .map(|((&x, &q), &y)| -x * q / y)
                        .collect();
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.iter().map(|&x| x * *c).collect()),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Exp(a) => self.accumulate(grads, *a, g.iter().zip(out).map(|(&x, &y)| x * y).collect()),
            Op::Ln(a) => {
                let va = val(*a);
                self.accumulate(grads, *a, g.iter().zip(va).map(|(&x, &y)| x / y).collect())
            }
            Op::Sqrt(a) => {
                let two = T::of(2.0);
                let ga = g
                    .iter()
                    .zip(out)
                    .map(|(&x, &y)| if y > T::zero() { x / (two * y) } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, ga)
            }
            Op::Square(a) => {
                let two = T::of(2.0);
                let va = val(*a);
                self.accumulate(grads, *a, g.iter().zip(va).map(|(&x, &y)| two * x * y).collect())
            }
            Op::Relu(a) => {
                let va = val(*a);
                let ga = g
                    .iter()
                    .zip(va)
                    .map(|(&x, &y)| if y > T::zero() { x } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, ga)
            }
            Op::ClampMin(a, floor) => {
                let va = val(*a);
                let ga = g
                    .iter()
                    .zip(va)
                    .map(|(&x, &y)| if y >= *floor { x } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, ga)
            }
            Op::Sum(a) => self.accumulate(grads, *a, vec![g[0]; val(*a).len()]),
            Op::Mean(a) => {
                let n = val(*a).len();
                self.accumulate(grads, *a, vec![g[0] / T::of(n as f64); n])
            }
            Op::SumLast(a) => {
                let m = self.nodes[a.0].value.shape()[1];
                let ga = g.iter().flat_map(|&x| std::iter::repeat_n(x, m)).collect();
                self.accumulate(grads, *a, ga)
            }
            Op::MeanFirst(a) => {
                let n = self.nodes[a.0].value.shape()[0];
                let inv = T::one() / T::of(n as f64);
                let row: Vec<T> = g.iter().map(|&x| x * inv).collect();
                let ga = (0..n).flat_map(|_| row.iter().copied()).collect();
                self.accumulate(grads, *a, ga)
            }
            Op::MatMul(a, b) => {
                let (n, k) = (self.nodes[a.0].value.shape()[0], self.nodes[a.0].value.shape()[1]);
                let m = self.nodes[b.0].value.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let mut ga = vec![T::zero(); n * k];
                    gemm(false, true, n, k, m, T::one(), g, val(*b), T::zero(), &mut ga);
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![T::zero(); k * m];
                    gemm(true, false, k, m, n, T::one(), val(*a), g, T::zero(), &mut gb);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Transpose(a) => {
                let (n, m) = (self.nodes[a.0].value.shape()[0], self.nodes[a.0].value.shape()[1]);
                let mut ga = vec![T::zero(); n * m];
                for i in 0..n {
                    for j in 0..m {
                        ga[i * m + j] = g[j * n + i];
                    }
                }
                self.accumulate(grads, *a, ga)
            }
            Op::Softmax(a) => {
                let m = *self.nodes[a.0].value.shape().last().unwrap();
                let mut ga = vec![T::zero(); out.len()];
                for ((gr, yr), dst) in g.chunks(m).zip(out.chunks(m)).zip(ga.chunks_mut(m)) {
                    let dot: T = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum();
                    for ((d, &x), &y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (x - dot);
                    }
                }
                self.accumulate(grads, *a, ga)
            }
            Op::LogSumExp(a) => {
                let va = val(*a);
                let m = *self.nodes[a.0].value.shape().last().unwrap();
                let mut ga = vec![T::zero(); va.len()];
                for (r, (row, dst)) in va.chunks(m).zip(ga.chunks_mut(m)).enumerate() {
                    let lse = out[r];
                    for (d, &v) in dst.iter_mut().zip(row) {
                        *d = g[r] * (v - lse).exp();
                    }
                }
                self.accumulate(grads, *a, ga)
            }
            Op::Gather(a, index) => {
                let m = self.nodes[a.0].value.shape()[1];
                let mut ga = vec![T::zero(); val(*a).len()];
                for (i, &j) in index.iter().enumerate() {
                    ga[i * m + j] += g[i];
                }
                self.accumulate(grads, *a, ga)
            }
            Op::PairwiseSqDist(x, c) => {
                let (n, d) = (self.nodes[x.0].value.shape()[0], self.nodes[x.0].value.shape()[1]);
                let k = self.nodes[c.0].value.shape()[1];
                let (xv, cv) = (val(*x), val(*c));
                let two = T::of(2.0);
                let mut gx = vec![T::zero(); n * d];
                let mut gc = vec![T::zero(); d * k];
                for i in 0..n {
                    for f in 0..d {
                        let xi = xv[i * d + f];
                        for j in 0..k {
                            let t = two * g[i * k + j] * (xi - cv[f * k + j]);
                            gx[i * d + f] += t;
                            gc[f * k + j] -= t;
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *c, gc);
            }
            Op::MinOffDiag(a, arg) => {
                let n = arg.len();
                let mut ga = vec![T::zero(); n * n];
                for (i, &j) in arg.iter().enumerate() {
                    ga[i * n + j] += g[i];
                }
                self.accumulate(grads, *a, ga)
            }
            Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Conv1d { x, w, b, geom, col } => {
                let ConvGeom {
                    batch,
                    c_in,
                    c_out,
                    len_in,
                    len_out,
                    kernel,
                    stride,
                    padding,
                } = *geom;
                let width = batch * len_out;
                let gy = bcl_to_cbl(g, batch, c_out, len_out);
                if self.nodes[b.0].requires_grad {
                    let gb = gy.chunks(width).map(|r| r.iter().copied().sum()).collect();
                    self.accumulate(grads, *b, gb);
                }
                if self.nodes[w.0].requires_grad {
                    let mut gw = vec![T::zero(); c_out * c_in * kernel];
                    gemm(false, true, c_out, c_in * kernel, width, T::one(), &gy, col, T::zero(), &mut gw);
                    self.accumulate(grads, *w, gw);
                }
                if self.nodes[x.0].requires_grad {
                    let mut gcol = vec![T::zero(); c_in * kernel * width];
                    gemm(true, false, c_in * kernel, width, c_out, T::one(), val(*w), &gy, T::zero(), &mut gcol);
                    let mut gx = vec![T::zero(); batch * c_in * len_in];
                    col2im(&gcol, &mut gx, batch, c_in, len_in, kernel, stride, padding, len_out);
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::ConvTranspose1d { x, w, b, geom } => {
                let ConvGeom {
                    batch,
                    c_in,
                    c_out,
                    len_in,
                    len_out,
                    kernel,
                    stride,
                    padding,
                } = *geom;
                let width = batch * len_in;
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![T::zero(); c_out];
                    for (r, row) in g.chunks(len_out).enumerate() {
                        gb[r % c_out] += row.iter().copied().sum();
                    }
                    self.accumulate(grads, *b, gb);
                }
                let gcols = im2col(g, batch, c_out, len_out, kernel, stride, padding, len_in);
                if self.nodes[w.0].requires_grad {
                    let xc = bcl_to_cbl(val(*x), batch, c_in, len_in);
                    let mut gw = vec![T::zero(); c_in * c_out * kernel];
                    gemm(false, true, c_in, c_out * kernel, width, T::one(), &xc, &gcols, T::zero(), &mut gw);
                    self.accumulate(grads, *w, gw);
                }
                if self.nodes[x.0].requires_grad {
                    let mut gxc = vec![T::zero(); c_in * width];
                    gemm(false, false, c_in, width, c_out * kernel, T::one(), val(*w), &gcols, T::zero(), &mut gxc);
                    self.accumulate(grads, *x, cbl_to_bcl(&gxc, batch, c_in, len_in));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                channels,
                xhat,
                inv_std,
                train,
            } => {
                let c = *channels;
                let shape = self.nodes[x.0].value.shape();
                let batch = shape[0];
                let len = if shape.len() == 3 { shape[2] } else { 1 };
                let count = T::of((batch * len) as f64);
                let gam = val(*gamma);
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for bi in 0..batch {
                    for ch in 0..c {
                        let o = (bi * c + ch) * len;
                        for l in 0..len {
                            sum_g[ch] += g[o + l];
                            sum_gx[ch] += g[o + l] * xhat[o + l];
                        }
                    }
                }
                self.accumulate(grads, *gamma, sum_gx.clone());
                self.accumulate(grads, *beta, sum_g.clone());
                if self.nodes[x.0].requires_grad {
                    let mut gx = vec![T::zero(); g.len()];
                    for bi in 0..batch {
                        for ch in 0..c {
                            let o = (bi * c + ch) * len;
                            let scale = gam[ch] * inv_std[ch];
                            for l in 0..len {
                                gx[o + l] = if *train {
                                    scale
                                        * (g[o + l]
                                            - sum_g[ch] / count
                                            - xhat[o + l] * sum_gx[ch] / count)
                                } else {
                                    scale * g[o + l]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::Dense {
                x,
                w,
                b,
                batch,
                n_in,
                n_out,
            } => {
                let (batch, n_in, n_out) = (*batch, *n_in, *n_out);
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![T::zero(); n_out];
                    for row in g.chunks(n_out) {
                        gb.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
                    }
                    self.accumulate(grads, *b, gb);
                }
                if self.nodes[w.0].requires_grad {
                    let mut gw = vec![T::zero(); n_out * n_in];
                    gemm(true, false, n_out, n_in, batch, T::one(), g, val(*x), T::zero(), &mut gw);
                    self.accumulate(grads, *w, gw);
                }
                if self.nodes[x.0].requires_grad {
                    let mut gx = vec![T::zero(); batch * n_in];
                    gemm(false, false, batch, n_in, n_out, T::one(), g, val(*w), T::zero(), &mut gx);
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::Mask(a, mask) => {
                self.accumulate(grads, *a, g.iter().zip(mask).map(|(&x, &m)| x * m).collect())
            }
            Op::GlobalAvgPool(a) => {
                let len = self.nodes[a.0].value.shape()[2];
                let inv = T::one() / T::of(len as f64);
                let ga = g.iter().flat_map(|&x| std::iter::repeat_n(x * inv, len)).collect();
                self.accumulate(grads, *a, ga)
            }
        }
    }
}

/// Gradient buffers produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`; zeros if `v` is not on a path to
    /// the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match self.grads.get(v.0) {
            Some(Some(g)) => Tensor::new(&self.shapes[v.0], g.clone()).expect("grad shape"),
            Some(None) => Tensor::zeros(&self.shapes[v.0]),
            None => panic!("variable {} was created after the loss", v.0),
        }
    }

    /// Moves the gradient out without copying; zeros if untouched.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        let shape = &self.shapes[v.0];
        match self.grads[v.0].take() {
            Some(g) => Tensor::new(shape, g).expect("grad shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn touched(&self, v: Var) -> bool {
        matches!(self.grads.get(v.0), Some(Some(_)))
    }
}
