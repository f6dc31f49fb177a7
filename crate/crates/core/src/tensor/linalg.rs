use super::Scalar;

/// `C[m×n] = alpha · op(A) · op(B) + beta · C` on contiguous row-major buffers.
///
/// `A` is stored `[m, k]`, or `[k, m]` when `trans_a`; `B` is stored `[k, n]`,
/// or `[n, k]` when `trans_b`. With `beta == 0` the previous contents of `c`
/// are ignored.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: A too short");
    assert!(b.len() >= k * n, "gemm: B too short");
    assert!(c.len() >= m * n, "gemm: C too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == T::zero() {
            c[..m * n].iter_mut().for_each(|v| *v = T::zero());
        } else {
            c[..m * n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; `c` is a unique borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds `src[B, C, len]` into columns `[C·K, B·positions]`.
///
/// `col[c·K + k, b·positions + i] = src[b, c, i·stride + k − padding]`, zero
/// outside the source.
pub fn im2col<T: Scalar>(
    src: &[T],
    batch: usize,
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    positions: usize,
) -> Vec<T> {
    let width = batch * positions;
    let mut col = vec![T::zero(); channels * kernel * width];
    for c in 0..channels {
        for k in 0..kernel {
            let row = &mut col[(c * kernel + k) * width..(c * kernel + k + 1) * width];
            for b in 0..batch {
                let s = &src[(b * channels + c) * len..(b * channels + c + 1) * len];
                let out = &mut row[b * positions..(b + 1) * positions];
                for (i, o) in out.iter_mut().enumerate() {
                    let p = (i * stride + k) as isize - padding as isize;
                    if p >= 0 && (p as usize) < len {
                        *o = s[p as usize];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `dst[B, C, len]`.
pub fn col2im<T: Scalar>(
    col: &[T],
    dst: &mut [T],
    batch: usize,
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    positions: usize,
) {
    let width = batch * positions;
    for c in 0..channels {
        for k in 0..kernel {
            let row = &col[(c * kernel + k) * width..(c * kernel + k + 1) * width];
            for b in 0..batch {
                let d = &mut dst[(b * channels + c) * len..(b * channels + c + 1) * len];
                let src = &row[b * positions..(b + 1) * positions];
                for (i, &v) in src.iter().enumerate() {
                    let p = (i * stride + k) as isize - padding as isize;
                    if p >= 0 && (p as usize) < len {
                        d[p as usize] += v;
                    }
                }
            }
        }
    }
}

/// `[B, C, L]` → `[C, B·L]`.
pub(crate) fn bcl_to_cbl<T: Scalar>(src: &[T], batch: usize, channels: usize, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for b in 0..batch {
        for c in 0..channels {
            let s = &src[(b * channels + c) * len..(b * channels + c + 1) * len];
            out[c * batch * len + b * len..c * batch * len + (b + 1) * len].copy_from_slice(s);
        }
    }
    out
}

/// `[C, B·L]` → `[B, C, L]`.
pub(crate) fn cbl_to_bcl<T: Scalar>(src: &[T], batch: usize, channels: usize, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for c in 0..channels {
        for b in 0..batch {
            let s = &src[c * batch * len + b * len..c * batch * len + (b + 1) * len];
            out[(b * channels + c) * len..(b * channels + c + 1) * len].copy_from_slice(s);
        }
    }
    out
}
