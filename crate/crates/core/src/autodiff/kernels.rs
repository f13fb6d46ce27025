//! Raw array kernels shared by the forward ops and their backward rules.
//!
//! Everything here is plain `&[f64]` arithmetic; the tape layer owns shape
//! checking and recording.

/// Padding rule for 1D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pad {
    /// Wrap around (periodic signals).
    Circular,
    /// Clamp to the edge value (Dirichlet-type boundaries).
    Replicate,
}

impl Pad {
    /// Map a possibly out-of-range column index into [0, len).
    #[inline]
    pub fn map(self, idx: isize, len: usize) -> usize {
        let n = len as isize;
        match self {
            Pad::Circular => (idx.rem_euclid(n)) as usize,
            Pad::Replicate => idx.clamp(0, n - 1) as usize,
        }
    }
}

pub fn ew1(a: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    a.iter().map(|&x| f(x)).collect()
}

pub fn ew2(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Numerically stable softplus ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, the derivative of softplus.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// x[batch, m] · mat[m, n] -> out[batch, n], contracting the last axis.
pub fn matmul_last(x: &[f64], batch: usize, m: usize, mat: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), batch * m);
    debug_assert_eq!(mat.len(), m * n);
    let mut out = vec![0.0; batch * n];
    for b in 0..batch {
        let row = &x[b * m..(b + 1) * m];
        let dst = &mut out[b * n..(b + 1) * n];
        for (l, &xl) in row.iter().enumerate() {
            let mrow = &mat[l * n..(l + 1) * n];
            for k in 0..n {
                dst[k] += xl * mrow[k];
            }
        }
    }
    out
}

/// g[batch, n] · matᵀ[n, m] -> out[batch, m]; input gradient of `matmul_last`.
pub fn matmul_last_grad_x(g: &[f64], batch: usize, n: usize, mat: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * m];
    for b in 0..batch {
        let grow = &g[b * n..(b + 1) * n];
        let dst = &mut out[b * m..(b + 1) * m];
        for l in 0..m {
            let mrow = &mat[l * n..(l + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                acc += grow[k] * mrow[k];
            }
            dst[l] = acc;
        }
    }
    out
}

/// Σ_batch xᵀ g -> out[m, n]; matrix gradient of `matmul_last`.
pub fn matmul_last_grad_mat(x: &[f64], g: &[f64], batch: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for b in 0..batch {
        let row = &x[b * m..(b + 1) * m];
        let grow = &g[b * n..(b + 1) * n];
        for (l, &xl) in row.iter().enumerate() {
            let dst = &mut out[l * n..(l + 1) * n];
            for k in 0..n {
                dst[k] += xl * grow[k];
            }
        }
    }
    out
}

/// Same-length 1D convolution with bias.
///
/// x[c_in, len], kernel[c_out, c_in, k], bias[c_out] -> out[c_out, len].
/// Kernel size must be odd; outputs align with inputs (offset k/2).
pub fn conv1d(
    x: &[f64],
    c_in: usize,
    len: usize,
    kernel: &[f64],
    c_out: usize,
    k: usize,
    bias: &[f64],
    pad: Pad,
) -> Vec<f64> {
    debug_assert_eq!(k % 2, 1, "conv kernel size must be odd");
    let half = (k / 2) as isize;
    let mut out = vec![0.0; c_out * len];
    for o in 0..c_out {
        let dst = &mut out[o * len..(o + 1) * len];
        dst.fill(bias[o]);
        for i in 0..c_in {
            let src = &x[i * len..(i + 1) * len];
            let kr = &kernel[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            for pos in 0..len {
                let mut acc = 0.0;
                for (t, &kt) in kr.iter().enumerate() {
                    let j = pad.map(pos as isize + t as isize - half, len);
                    acc += kt * src[j];
                }
                dst[pos] += acc;
            }
        }
    }
    out
}

/// Gradients of `conv1d` with respect to input, kernel and bias.
pub fn conv1d_backward(
    x: &[f64],
    c_in: usize,
    len: usize,
    kernel: &[f64],
    c_out: usize,
    k: usize,
    g: &[f64],
    pad: Pad,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let half = (k / 2) as isize;
    let mut gx = vec![0.0; c_in * len];
    let mut gk = vec![0.0; c_out * c_in * k];
    let mut gb = vec![0.0; c_out];
    for o in 0..c_out {
        let grow = &g[o * len..(o + 1) * len];
        gb[o] += grow.iter().sum::<f64>();
        for i in 0..c_in {
            let src = &x[i * len..(i + 1) * len];
            let kr = &kernel[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            let gkr = &mut gk[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            for pos in 0..len {
                let gp = grow[pos];
                for t in 0..k {
                    let j = pad.map(pos as isize + t as isize - half, len);
                    gkr[t] += src[j] * gp;
                    gx[i * len + j] += kr[t] * gp;
                }
            }
        }
    }
    (gx, gk, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_mapping() {
        assert_eq!(Pad::Circular.map(-1, 5), 4);
        assert_eq!(Pad::Circular.map(5, 5), 0);
        assert_eq!(Pad::Replicate.map(-1, 5), 0);
        assert_eq!(Pad::Replicate.map(7, 5), 4);
    }

    #[test]
    fn matmul_small() {
        // [1,2] · [[1,2],[3,4]] = [7,10]
        let out = matmul_last(&[1.0, 2.0], 1, 2, &[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(out, vec![7.0, 10.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        // Kernel (0,1,0) reproduces the input for any padding.
        let x = [1.0, 2.0, 3.0, 4.0];
        let kern = [0.0, 1.0, 0.0];
        let out = conv1d(&x, 1, 4, &kern, 1, 3, &[0.0], Pad::Circular);
        assert_eq!(out, x.to_vec());
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.5, 3.0] {
            let naive = (1.0f64 + x.exp()).ln();
            assert!((softplus(x) - naive).abs() < 1e-15);
        }
        assert!(softplus(800.0).is_finite());
        assert!(softplus(-800.0) >= 0.0);
    }
}
