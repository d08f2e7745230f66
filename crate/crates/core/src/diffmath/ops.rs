//! Forward operations and their closed-form adjoints.
//!
//! Every differentiable op `foo` has a matching `foo_backward` that maps the
//! upstream gradient to gradients of its inputs. Callers keep whatever forward
//! values the adjoint needs; there is no tape.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn split_last(shape: &[usize]) -> (usize, usize) {
    let last = *shape.last().unwrap_or(&1);
    let rows = shape[..shape.len().saturating_sub(1)].iter().product();
    (rows, last)
}

// ── linear algebra ───────────────────────────────────────────────────────────

/// `x[..., k] · w[k, m]` without bias.
pub fn matmul_last(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    if w.rank() != 2 || x.shape().last() != Some(&w.shape()[0]) {
        return Err(Error::dim("matmul", x.shape(), w.shape()));
    }
    let (rows, k) = split_last(x.shape());
    let m = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        let xr = &xd[r * k..(r + 1) * k];
        let or = &mut out[r * m..(r + 1) * m];
        for (kk, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &wd[kk * m..(kk + 1) * m];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += xv * wv;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = m;
    Tensor::new(shape, out)
}

/// Gradients of `matmul_last` with respect to `x` and `w`.
pub fn matmul_last_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    let (rows, k) = split_last(x.shape());
    let m = w.shape()[1];
    if dy.len() != rows * m || dy.shape().last() != Some(&m) {
        return Err(Error::dim("matmul_backward", x.shape(), dy.shape()));
    }
    let xd = x.data();
    let wd = w.data();
    let gd = dy.data();
    let mut dx = vec![0.0; rows * k];
    let mut dw = vec![0.0; k * m];
    for r in 0..rows {
        let gr = &gd[r * m..(r + 1) * m];
        let xr = &xd[r * k..(r + 1) * k];
        for kk in 0..k {
            let wr = &wd[kk * m..(kk + 1) * m];
            let mut acc = 0.0;
            for (g, wv) in gr.iter().zip(wr) {
                acc += g * wv;
            }
            dx[r * k + kk] = acc;
            let xv = xr[kk];
            if xv != 0.0 {
                let dwr = &mut dw[kk * m..(kk + 1) * m];
                for (d, g) in dwr.iter_mut().zip(gr) {
                    *d += xv * g;
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
    ))
}

/// Fully connected layer: `out[..., j] = Σ_k x[..., k]·w[k, j] + b[j]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = matmul_last(x, w)?;
    if b.rank() != 1 || b.len() != w.shape()[1] {
        return Err(Error::dim("linear bias", w.shape(), b.shape()));
    }
    let m = b.len();
    let bd = b.data();
    for row in y.data_mut().chunks_mut(m) {
        for (o, bv) in row.iter_mut().zip(bd) {
            *o += bv;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<LinearGrads> {
    let (dx, dw) = matmul_last_backward(x, w, dy)?;
    let m = w.shape()[1];
    let mut db = vec![0.0; m];
    for row in dy.data().chunks(m) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok(LinearGrads {
        dx,
        dw,
        db: Tensor::new(vec![m], db)?,
    })
}

// ── softmax and attention ────────────────────────────────────────────────────

/// Row-wise softmax over the last axis, max-subtracted.
pub fn softmax_last(x: &Tensor) -> Tensor {
    let (_, m) = split_last(x.shape());
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(m) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Adjoint of `softmax_last` given its output `y`.
pub fn softmax_last_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if !y.same_shape(dy) {
        return Err(Error::dim("softmax_backward", y.shape(), dy.shape()));
    }
    let (_, m) = split_last(y.shape());
    let mut dx = dy.clone();
    for (dr, yr) in dx.data_mut().chunks_mut(m).zip(y.data().chunks(m)) {
        let dot: f64 = dr.iter().zip(yr).map(|(g, p)| g * p).sum();
        for (g, p) in dr.iter_mut().zip(yr) {
            *g = p * (*g - dot);
        }
    }
    Ok(dx)
}

fn check_attention_shapes(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize)> {
    if q.rank() != 3 {
        return Err(Error::dim("attention", q.shape(), k.shape()));
    }
    if !q.same_shape(k) {
        return Err(Error::dim("attention", q.shape(), k.shape()));
    }
    if !q.same_shape(v) {
        return Err(Error::dim("attention", q.shape(), v.shape()));
    }
    let s = q.shape();
    Ok((s[0], s[1], s[2]))
}

/// `A = softmax(Q·Kᵀ/√d)` and `O = A·V`, independently per leading index.
///
/// Shapes: `q, k, v: [n, t, d]`, returns `(o: [n, t, d], a: [n, t, t])`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, t, d) = check_attention_shapes(q, k, v)?;
    let scale = 1.0 / libm::sqrt(d as f64);
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut scores = vec![0.0; n * t * t];
    for e in 0..n {
        let base = e * t * d;
        for i in 0..t {
            let qi = &qd[base + i * d..base + (i + 1) * d];
            for j in 0..t {
                let kj = &kd[base + j * d..base + (j + 1) * d];
                let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                scores[e * t * t + i * t + j] = dot * scale;
            }
        }
    }
    let a = softmax_last(&Tensor::new(vec![n, t, t], scores)?);
    let ad = a.data();
    let mut out = vec![0.0; n * t * d];
    for e in 0..n {
        for i in 0..t {
            let orow = &mut out[e * t * d + i * d..e * t * d + (i + 1) * d];
            for j in 0..t {
                let w = ad[e * t * t + i * t + j];
                let vj = &vd[e * t * d + j * d..e * t * d + (j + 1) * d];
                for (o, x) in orow.iter_mut().zip(vj) {
                    *o += w * x;
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, t, d], out)?, a))
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dq: Tensor,
    pub dk: Tensor,
    pub dv: Tensor,
}

/// Adjoint of `scaled_dot_attention`; `a` is the forward attention matrix.
pub fn scaled_dot_attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    a: &Tensor,
    d_out: &Tensor,
) -> Result<AttentionGrads> {
    let (n, t, d) = check_attention_shapes(q, k, v)?;
    if !q.same_shape(d_out) {
        return Err(Error::dim("attention_backward", q.shape(), d_out.shape()));
    }
    if a.shape() != [n, t, t] {
        return Err(Error::dim("attention_backward", &[n, t, t], a.shape()));
    }
    let scale = 1.0 / libm::sqrt(d as f64);
    let (qd, kd, vd, ad, gd) = (q.data(), k.data(), v.data(), a.data(), d_out.data());
    let mut dv = vec![0.0; n * t * d];
    let mut da = vec![0.0; n * t * t];
    for e in 0..n {
        let b3 = e * t * d;
        let b2 = e * t * t;
        for i in 0..t {
            let gi = &gd[b3 + i * d..b3 + (i + 1) * d];
            for j in 0..t {
                let vj = &vd[b3 + j * d..b3 + (j + 1) * d];
                da[b2 + i * t + j] = gi.iter().zip(vj).map(|(x, y)| x * y).sum();
                let w = ad[b2 + i * t + j];
                let dvj = &mut dv[b3 + j * d..b3 + (j + 1) * d];
                for (o, g) in dvj.iter_mut().zip(gi) {
                    *o += w * g;
                }
            }
        }
    }
    let ds = softmax_last_backward(a, &Tensor::new(vec![n, t, t], da)?)?;
    let sd = ds.data();
    let mut dq = vec![0.0; n * t * d];
    let mut dk = vec![0.0; n * t * d];
    for e in 0..n {
        let b3 = e * t * d;
        let b2 = e * t * t;
        for i in 0..t {
            for j in 0..t {
                let s = sd[b2 + i * t + j] * scale;
                if s == 0.0 {
                    continue;
                }
                for c in 0..d {
                    dq[b3 + i * d + c] += s * kd[b3 + j * d + c];
                    dk[b3 + j * d + c] += s * qd[b3 + i * d + c];
                }
            }
        }
    }
    Ok(AttentionGrads {
        dq: Tensor::new(vec![n, t, d], dq)?,
        dk: Tensor::new(vec![n, t, d], dk)?,
        dv: Tensor::new(vec![n, t, d], dv)?,
    })
}

// ── elementwise ──────────────────────────────────────────────────────────────

/// Rectifier. The subgradient at exactly zero is taken to be 0.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if !x.same_shape(dy) {
        return Err(Error::dim("relu_backward", x.shape(), dy.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Number of times `small` repeats inside `big` when expanded along leading
/// axes; `small`'s shape must be a suffix of `big`'s.
fn leading_repeats(op: &'static str, big: &[usize], small: &[usize]) -> Result<usize> {
    if small.len() > big.len() || big[big.len() - small.len()..] != *small {
        return Err(Error::dim(op, big, small));
    }
    Ok(big[..big.len() - small.len()].iter().product())
}

fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    leading_repeats(op, a.shape(), b.shape())?;
    let bd = b.data();
    let mut out = a.clone();
    for chunk in out.data_mut().chunks_mut(bd.len()) {
        for (x, &y) in chunk.iter_mut().zip(bd) {
            *x = f(*x, y);
        }
    }
    Ok(out)
}

/// Sums a gradient of `big` shape back down to `small` (leading-axis reduction).
pub fn reduce_leading(dy: &Tensor, small: &[usize]) -> Result<Tensor> {
    leading_repeats("reduce_leading", dy.shape(), small)?;
    let n: usize = small.iter().product();
    let mut out = vec![0.0; n];
    for chunk in dy.data().chunks(n) {
        for (o, g) in out.iter_mut().zip(chunk) {
            *o += g;
        }
    }
    Tensor::new(small.to_vec(), out)
}

/// Repeats `x` along new leading axes `lead`.
pub fn expand_leading(x: &Tensor, lead: &[usize]) -> Result<Tensor> {
    let reps: usize = lead.iter().product();
    let mut shape = lead.to_vec();
    shape.extend_from_slice(x.shape());
    let mut data = Vec::with_capacity(reps * x.len());
    for _ in 0..reps {
        data.extend_from_slice(x.data());
    }
    Tensor::new(shape, data)
}

/// `a + b`, where `b` may be expanded along leading axes of `a`.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_broadcast("add", a, b, |x, y| x + y)
}

pub fn add_backward(b_shape: &[usize], dy: &Tensor) -> Result<(Tensor, Tensor)> {
    Ok((dy.clone(), reduce_leading(dy, b_shape)?))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_broadcast("sub", a, b, |x, y| x - y)
}

pub fn sub_backward(b_shape: &[usize], dy: &Tensor) -> Result<(Tensor, Tensor)> {
    let db = reduce_leading(dy, b_shape)?.map(|g| -g);
    Ok((dy.clone(), db))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_broadcast("mul", a, b, |x, y| x * y)
}

pub fn mul_backward(a: &Tensor, b: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    if !a.same_shape(dy) {
        return Err(Error::dim("mul_backward", a.shape(), dy.shape()));
    }
    let da = zip_broadcast("mul_backward", dy, b, |g, y| g * y)?;
    let ga = mul(dy, a)?;
    Ok((da, reduce_leading(&ga, b.shape())?))
}

pub fn scale(x: &Tensor, factor: f64) -> Tensor {
    x.map(|v| v * factor)
}

pub fn scale_backward(factor: f64, dy: &Tensor) -> Tensor {
    dy.map(|g| g * factor)
}

// ── layout ───────────────────────────────────────────────────────────────────

/// Reinterprets the data with a new shape of equal element count.
pub fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    if n != x.len() {
        return Err(Error::dim("reshape", x.shape(), shape));
    }
    Tensor::new(shape.to_vec(), x.data().to_vec())
}

/// Exchanges two axes. Its own adjoint.
pub fn swap_axes(x: &Tensor, a1: usize, a2: usize) -> Result<Tensor> {
    let shape = x.shape();
    if a1 >= shape.len() || a2 >= shape.len() {
        return Err(Error::dim("swap_axes", shape, &[a1, a2]));
    }
    if a1 == a2 {
        return Ok(x.clone());
    }
    let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
    // view the tensor as [outer, n_lo, mid, n_hi, inner]
    let outer: usize = shape[..lo].iter().product();
    let n_lo = shape[lo];
    let mid: usize = shape[lo + 1..hi].iter().product();
    let n_hi = shape[hi];
    let inner: usize = shape[hi + 1..].iter().product();
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    let mut dst = 0;
    for o in 0..outer {
        for h in 0..n_hi {
            for m in 0..mid {
                for l in 0..n_lo {
                    let s = (((o * n_lo + l) * mid + m) * n_hi + h) * inner;
                    out[dst..dst + inner].copy_from_slice(&src[s..s + inner]);
                    dst += inner;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape.swap(lo, hi);
    Tensor::new(new_shape, out)
}

/// Swaps the last two axes.
pub fn transpose(x: &Tensor) -> Result<Tensor> {
    let r = x.rank();
    if r < 2 {
        return Err(Error::dim("transpose", x.shape(), &[]));
    }
    swap_axes(x, r - 2, r - 1)
}

/// Joins along the last axis; all other extents must agree.
pub fn concat_last(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
        return Err(Error::dim("concat_last", sa, sb));
    }
    let (rows, ma) = split_last(sa);
    let mb = *sb.last().unwrap();
    let mut data = Vec::with_capacity(rows * (ma + mb));
    for (ra, rb) in a.data().chunks(ma).zip(b.data().chunks(mb)) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    let mut shape = sa.to_vec();
    *shape.last_mut().unwrap() = ma + mb;
    Tensor::new(shape, data)
}

/// Splits an upstream gradient of a `concat_last` result at `split`.
pub fn concat_last_backward(dy: &Tensor, split: usize) -> Result<(Tensor, Tensor)> {
    let (rows, m) = split_last(dy.shape());
    if split == 0 || split >= m {
        return Err(Error::dim("concat_last_backward", dy.shape(), &[split]));
    }
    let mut da = Vec::with_capacity(rows * split);
    let mut db = Vec::with_capacity(rows * (m - split));
    for row in dy.data().chunks(m) {
        da.extend_from_slice(&row[..split]);
        db.extend_from_slice(&row[split..]);
    }
    let mut sa = dy.shape().to_vec();
    let mut sb = sa.clone();
    *sa.last_mut().unwrap() = split;
    *sb.last_mut().unwrap() = m - split;
    Ok((Tensor::new(sa, da)?, Tensor::new(sb, db)?))
}

/// Takes `len` consecutive entries starting at `start` along `axis`
/// (the time axis in practice).
pub fn slice_axis(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() || len == 0 || start + len > shape[axis] {
        return Err(Error::dim("slice_axis", shape, &[axis, start, len]));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let n = shape[axis];
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let s = (o * n + start) * inner;
        data.extend_from_slice(&x.data()[s..s + len * inner]);
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = len;
    Tensor::new(new_shape, data)
}

/// Scatters a slice gradient back into a zero tensor of `full_shape`.
pub fn slice_axis_backward(
    dy: &Tensor,
    full_shape: &[usize],
    axis: usize,
    start: usize,
) -> Result<Tensor> {
    let len = *dy
        .shape()
        .get(axis)
        .ok_or_else(|| Error::dim("slice_axis_backward", full_shape, dy.shape()))?;
    let mut expect = full_shape.to_vec();
    if axis >= expect.len() || start + len > expect[axis] {
        return Err(Error::dim("slice_axis_backward", full_shape, dy.shape()));
    }
    expect[axis] = len;
    if expect != dy.shape() {
        return Err(Error::dim("slice_axis_backward", full_shape, dy.shape()));
    }
    let outer: usize = full_shape[..axis].iter().product();
    let inner: usize = full_shape[axis + 1..].iter().product();
    let n = full_shape[axis];
    let mut out = Tensor::zeros(full_shape)?;
    for o in 0..outer {
        let s = (o * n + start) * inner;
        let src = &dy.data()[o * len * inner..(o + 1) * len * inner];
        out.data_mut()[s..s + len * inner].copy_from_slice(src);
    }
    Ok(out)
}
