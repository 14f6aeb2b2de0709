//! Row-major dense kernels.

/// `c = alpha * op(a) * op(b) + beta * c` for row-major buffers.
///
/// `op(a)` is `m×k`, `op(b)` is `k×n`, `c` is `m×n`. When `ta` is set, `a`
/// is stored as `k×m`; likewise `tb` means `b` is stored as `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k, "lhs buffer too small");
    assert!(b.len() >= k * n, "rhs buffer too small");
    assert!(c.len() >= m * n, "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta != 1.0 {
            c[..m * n].iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches:
    // a[(i*rsa + p*csa)] < m*k, b[(p*rsb + j*csb)] < k*n, c[i*n + j] < m*n.
    unsafe {
        matrixmultiply::dgemm(
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

/// `y (n×out) = x (n×in) · wᵀ + b`, with `w` stored `out×in`.
pub fn linear(x: &[f64], w: &[f64], b: Option<&[f64]>, n: usize, inp: usize, out: usize, y: &mut [f64]) {
    match b {
        Some(b) => {
            for row in y[..n * out].chunks_exact_mut(out) {
                row.copy_from_slice(b);
            }
            gemm(n, inp, out, 1.0, x, false, w, true, 1.0, y);
        }
        None => gemm(n, inp, out, 1.0, x, false, w, true, 0.0, y),
    }
}

/// Backward pass of [`linear`]: accumulates `dw += dyᵀ·x` and `db += Σ dy`,
/// and writes `dx = dy·w` when requested.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    n: usize,
    inp: usize,
    out: usize,
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) {
    gemm(out, n, inp, 1.0, dy, true, x, false, 1.0, dw);
    if let Some(db) = db {
        for row in dy[..n * out].chunks_exact(out) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
    if let Some(dx) = dx {
        gemm(n, out, inp, 1.0, dy, false, w, false, 0.0, dx);
    }
}
