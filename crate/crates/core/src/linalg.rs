//! Row-major dense helpers on `f64` slices.

/// `c = alpha * op(a) * op(b) + beta * c` with explicit strides.
///
/// `a` is `m × k` and `b` is `k × n` as seen through their strides; `c` is a
/// contiguous row-major `m × n` block.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n, "gemm: output too small");
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "gemm: lhs too small");
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "gemm: rhs too small");
    }
    // SAFETY: every index touched by dgemm is bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out (rows × m) (+)= x (rows × k) · wᵀ` where `w` is `m × k`.
pub fn mul_transposed(x: &[f64], w: &[f64], rows: usize, k: usize, m: usize, out: &mut [f64], accumulate: bool) {
    gemm(rows, k, m, 1.0, x, (k, 1), w, (1, k), if accumulate { 1.0 } else { 0.0 }, out);
}

/// `out (rows × k) (+)= d (rows × m) · w` where `w` is `m × k`.
pub fn mul(d: &[f64], w: &[f64], rows: usize, m: usize, k: usize, out: &mut [f64], accumulate: bool) {
    gemm(rows, m, k, 1.0, d, (m, 1), w, (k, 1), if accumulate { 1.0 } else { 0.0 }, out);
}

/// `grad (m × k) += dᵀ · x` where `d` is `rows × m` and `x` is `rows × k`.
pub fn accumulate_outer(d: &[f64], x: &[f64], rows: usize, m: usize, k: usize, grad: &mut [f64]) {
    gemm(m, rows, k, 1.0, d, (1, m), x, (k, 1), 1.0, grad);
}

/// Adds the column sums of `d` (`rows × m`) to `grad`.
pub fn accumulate_column_sums(d: &[f64], rows: usize, m: usize, grad: &mut [f64]) {
    for r in 0..rows {
        for (g, v) in grad.iter_mut().zip(&d[r * m..(r + 1) * m]) {
            *g += v;
        }
    }
}

/// `g = aᵀ a` for `a` of shape `rows × cols`.
pub fn gram(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    gemm(cols, rows, cols, 1.0, a, (1, cols), a, (cols, 1), 0.0, &mut g);
    g
}

/// `aᵀ b` for `a` (`rows × p`) and `b` (`rows × q`).
pub fn transpose_mul(a: &[f64], b: &[f64], rows: usize, p: usize, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * q];
    gemm(p, rows, q, 1.0, a, (1, p), b, (q, 1), 0.0, &mut out);
    out
}

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..n {
        s += a[i] * b[i];
    }
    s
}

/// Lower Cholesky factor of a symmetric positive definite `n × n` matrix,
/// computed in place. Returns `None` if a pivot is not safely positive.
pub fn cholesky(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tiny = scale * 1e-13;
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + n];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(d > tiny) {
            return None;
        }
        row_i[i] = d.sqrt();
        for v in &mut row_i[i + 1..] {
            *v = 0.0;
        }
    }
    Some(a)
}

/// Solve `l lᵀ x = b` for several right-hand sides stored row-major in `b`
/// (`n × nrhs`).
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64], nrhs: usize) {
    // Forward: l y = b.
    for i in 0..n {
        for p in 0..i {
            let lip = l[i * n + p];
            if lip != 0.0 {
                for c in 0..nrhs {
                    b[i * nrhs + c] -= lip * b[p * nrhs + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..nrhs {
            b[i * nrhs + c] /= d;
        }
    }
    // Backward: lᵀ x = y.
    for i in (0..n).rev() {
        for p in i + 1..n {
            let lpi = l[p * n + i];
            if lpi != 0.0 {
                for c in 0..nrhs {
                    b[i * nrhs + c] -= lpi * b[p * nrhs + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..nrhs {
            b[i * nrhs + c] /= d;
        }
    }
}
