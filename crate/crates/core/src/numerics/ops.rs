//! Forward kernels. Each function validates shapes and returns a fresh tensor.

use super::{Real, Tensor};
use crate::error::{Error, Result};

fn expect_matrix<F: Real>(op: &'static str, t: &Tensor<F>) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        [c] => Ok((1, *c)),
        other => Err(Error::shape(op, other, &[0, 0])),
    }
}

/// `out[t, j] = sum_i x[t, i] * w[i, j] + b[j]`.
pub fn dense<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (rows, din) = expect_matrix("dense", x)?;
    let (win, dout) = match w.shape() {
        [i, o] => (*i, *o),
        other => return Err(Error::shape("dense", x.shape(), other)),
    };
    if din != win {
        return Err(Error::shape("dense", x.shape(), w.shape()));
    }
    if b.len() != dout {
        return Err(Error::shape("dense", w.shape(), b.shape()));
    }
    let mut out = vec![F::zero(); rows * dout];
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    for t in 0..rows {
        let o = &mut out[t * dout..(t + 1) * dout];
        o.copy_from_slice(bd);
        for (i, &xv) in xd[t * din..(t + 1) * din].iter().enumerate() {
            if xv == F::zero() {
                continue;
            }
            for (acc, &wv) in o.iter_mut().zip(&wd[i * dout..(i + 1) * dout]) {
                *acc = *acc + xv * wv;
            }
        }
    }
    Tensor::new(vec![rows, dout], out)
}

/// Plain matrix product `a[m×k] · b[k×n]`.
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (m, k) = expect_matrix("matmul", a)?;
    let (kb, n) = match b.shape() {
        [r, c] => (*r, *c),
        other => return Err(Error::shape("matmul", a.shape(), other)),
    };
    if k != kb {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![F::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let o = &mut out[i * n..(i + 1) * n];
        for (p, &av) in ad[i * k..(i + 1) * k].iter().enumerate() {
            for (acc, &bv) in o.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *acc = *acc + av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Checks conv1d operand shapes and returns `(T, Cin, Cout, K)`.
pub fn conv1d_dims<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
) -> Result<(usize, usize, usize, usize)> {
    let (t, cin) = match x.shape() {
        [t, c] => (*t, *c),
        other => return Err(Error::shape("conv1d", other, w.shape())),
    };
    let (k, wcin, cout) = match w.shape() {
        [k, ci, co] => (*k, *ci, *co),
        other => return Err(Error::shape("conv1d", x.shape(), other)),
    };
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "conv1d kernel size must be odd for same padding, got {k}"
        )));
    }
    if t == 0 {
        return Err(Error::Input("conv1d on an empty sequence".into()));
    }
    if cin != wcin {
        return Err(Error::shape("conv1d", x.shape(), w.shape()));
    }
    if b.len() != cout {
        return Err(Error::shape("conv1d", w.shape(), b.shape()));
    }
    Ok((t, cin, cout, k))
}

/// Stride-1 temporal convolution with zero "same" padding of `(K-1)/2` per side.
pub fn conv1d<F: Real>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (t_len, cin, cout, k) = conv1d_dims(x, w, b)?;
    let pad = (k - 1) / 2;
    let mut out = vec![F::zero(); t_len * cout];
    let (xd, wd) = (x.data(), w.data());
    for t in 0..t_len {
        let o = &mut out[t * cout..(t + 1) * cout];
        o.copy_from_slice(b.data());
        for kk in 0..k {
            let Some(s) = (t + kk).checked_sub(pad).filter(|&s| s < t_len) else {
                continue;
            };
            let xin = &xd[s * cin..(s + 1) * cin];
            let wk = &wd[kk * cin * cout..(kk + 1) * cin * cout];
            for (c, &xv) in xin.iter().enumerate() {
                if xv == F::zero() {
                    continue;
                }
                for (acc, &wv) in o.iter_mut().zip(&wk[c * cout..(c + 1) * cout]) {
                    *acc = *acc + xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![t_len, cout], out)
}

/// Per-row standardization statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct NormStats<F> {
    /// Standardized values before the affine map.
    pub normalized: Tensor<F>,
    /// `1 / sqrt(var + eps)` per normalized vector.
    pub inv_std: Vec<F>,
}

/// Layer normalization over the last axis with learnable gain and bias.
pub fn layer_norm<F: Real>(
    x: &Tensor<F>,
    gain: &Tensor<F>,
    bias: &Tensor<F>,
    eps: F,
) -> Result<(Tensor<F>, NormStats<F>)> {
    let d = x.last_dim();
    if d == 0 {
        return Err(Error::Input("layer_norm over an empty axis".into()));
    }
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape("layer_norm", x.shape(), gain.shape()));
    }
    let rows = x.rows();
    let n = F::of(d as f64);
    let mut normalized = vec![F::zero(); rows * d];
    let mut out = vec![F::zero(); rows * d];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<F>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let is = F::one() / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..d {
            let xh = (row[j] - mean) * is;
            normalized[r * d + j] = xh;
            out[r * d + j] = gain.data()[j] * xh + bias.data()[j];
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        NormStats {
            normalized: Tensor::new(x.shape().to_vec(), normalized)?,
            inv_std,
        },
    ))
}

/// Standardizes each column of a `T×D` matrix over the time axis (population variance).
pub fn standardize_columns<F: Real>(x: &Tensor<F>, eps: F) -> Result<NormStats<F>> {
    let (t, d) = match x.shape() {
        [t, d] if *t > 0 => (*t, *d),
        other => return Err(Error::shape("standardize_columns", other, &[1, 0])),
    };
    let n = F::of(t as f64);
    let xd = x.data();
    let mut mean = vec![F::zero(); d];
    for r in 0..t {
        for (m, &v) in mean.iter_mut().zip(&xd[r * d..(r + 1) * d]) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut var = vec![F::zero(); d];
    for r in 0..t {
        for j in 0..d {
            let c = xd[r * d + j] - mean[j];
            var[j] = var[j] + c * c;
        }
    }
    let inv_std: Vec<F> = var
        .iter()
        .map(|&v| F::one() / (v / n + eps).sqrt())
        .collect();
    let mut out = vec![F::zero(); t * d];
    for r in 0..t {
        for j in 0..d {
            out[r * d + j] = (xd[r * d + j] - mean[j]) * inv_std[j];
        }
    }
    Ok(NormStats {
        normalized: Tensor::new(vec![t, d], out)?,
        inv_std,
    })
}

pub fn relu<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| if v > F::zero() { v } else { F::zero() })
}

pub fn sigmoid_scalar<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub fn sigmoid<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    x.map(sigmoid_scalar)
}

/// Softmax over the last axis, max-subtracted.
pub fn softmax<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let d = x.last_dim();
    let mut out = x.clone();
    if d == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(d) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// Joins two matrices with equal row counts along the feature axis.
pub fn concat_cols<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (ra, ca) = expect_matrix("concat_cols", a)?;
    let (rb, cb) = expect_matrix("concat_cols", b)?;
    if ra != rb {
        return Err(Error::shape("concat_cols", a.shape(), b.shape()));
    }
    let mut out = Vec::with_capacity(ra * (ca + cb));
    for r in 0..ra {
        out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::new(vec![ra, ca + cb], out)
}

pub fn euclidean<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<F>()
        .sqrt()
}
