use serde::{Deserialize, Serialize};

/// Dense row-major array of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Panics when `data` does not match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape {shape:?} does not fit data");
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Value at a multi-index.
    pub fn at(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.shape.len());
        let flat = idx
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &dim)| {
                assert!(i < dim, "index {i} out of bounds for dimension {dim}");
                acc * dim + i
            });
        self.data[flat]
    }
}

/// `C = alpha·op(A)·op(B) + beta·C` for row-major `A`, `B`, `C`, where
/// `op(A)` is `m×k` and `op(B)` is `k×n`. A transposed operand is stored in
/// its transposed shape.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the length checks above keep every strided access in bounds.
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

/// `out = x·W + b` for `x: rows×d_in`, `W: d_in×d_out`.
pub(crate) fn linear(x: &[f64], rows: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (d_in, d_out) = (w.shape[0], w.shape[1]);
    let mut out = Vec::with_capacity(rows * d_out);
    for _ in 0..rows {
        out.extend_from_slice(&b.data);
    }
    gemm(false, false, rows, d_out, d_in, 1.0, x, &w.data, 1.0, &mut out);
    out
}

/// Accumulates weight and bias gradients of [`linear`] and returns the
/// gradient with respect to `x`.
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    w: &Tensor,
    dy: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (d_in, d_out) = (w.shape[0], w.shape[1]);
    gemm(true, false, d_in, d_out, rows, 1.0, x, dy, 1.0, &mut dw.data);
    for row in dy.chunks_exact(d_out) {
        for (g, &d) in db.data.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; rows * d_in];
    gemm(false, true, rows, d_in, d_out, 1.0, dy, &w.data, 0.0, &mut dx);
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Per-row normalization state kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], d: usize, gamma: &Tensor, beta: &Tensor, eps: f64) -> (Vec<f64>, NormCache) {
    let rows = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut cache = NormCache {
        xhat: vec![0.0; x.len()],
        rstd: vec![0.0; rows],
    };
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + eps).sqrt();
        cache.rstd[r] = rstd;
        for j in 0..d {
            let xh = (row[j] - mean) * rstd;
            cache.xhat[r * d + j] = xh;
            out[r * d + j] = xh * gamma.data[j] + beta.data[j];
        }
    }
    (out, cache)
}

pub(crate) fn layer_norm_backward(
    dy: &[f64],
    d: usize,
    cache: &NormCache,
    gamma: &Tensor,
    dgamma: &mut Tensor,
    dbeta: &mut Tensor,
) -> Vec<f64> {
    let rows = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut g = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for j in 0..d {
            dgamma.data[j] += dyr[j] * xh[j];
            dbeta.data[j] += dyr[j];
            g[j] = dyr[j] * gamma.data[j];
            sum_g += g[j];
            sum_gx += g[j] * xh[j];
        }
        let rstd = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] = rstd * (g[j] - (sum_g + xh[j] * sum_gx) / d as f64);
        }
    }
    dx
}

/// In-place softmax of each `width`-long row.
pub(crate) fn softmax_rows(x: &mut [f64], width: usize) {
    for row in x.chunks_exact_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Mean cross-entropy of `logits` (rows×classes) against `targets`, and its
/// gradient with respect to the logits.
pub(crate) fn cross_entropy(logits: &[f64], classes: usize, targets: &[usize]) -> (f64, Vec<f64>) {
    let rows = targets.len();
    let mut grad = logits.to_vec();
    softmax_rows(&mut grad, classes);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[t];
        grad[r * classes + t] -= 1.0;
    }
    let scale = 1.0 / rows as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}
