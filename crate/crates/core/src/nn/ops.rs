//! Forward kernels on plain tensors. The graph in [`super::graph`] calls
//! these and adds the matching backward passes.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;

pub(crate) fn conv_output_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Cross-correlation of an `[H, W, Cin]` input with a `[k, k, Cin, Cout]`
/// kernel, zero padding on every side.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (h, w, cin) = match input.shape() {
        [h, w, c] => (*h, *w, *c),
        s => return Err(Error::shape("conv2d", format!("input must be [H,W,C], got {s:?}"))),
    };
    let (k, cout) = match kernel.shape() {
        [k1, k2, ci, co] if k1 == k2 && *ci == cin => (*k1, *co),
        s => {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {s:?} incompatible with {cin} input channels"),
            ))
        }
    };
    let (Some(oh), Some(ow)) = (
        conv_output_extent(h, k, stride, padding),
        conv_output_extent(w, k, stride, padding),
    ) else {
        return Err(Error::shape(
            "conv2d",
            format!("{h}x{w} input with padding {padding} is smaller than kernel {k} (stride {stride})"),
        ));
    };
    let x = input.data();
    let kd = kernel.data();
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xin = &x[(iy as usize * w + ix as usize) * cin..][..cin];
                    let kbase = (ky * k + kx) * cin * cout;
                    for (ci, &v) in xin.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let krow = &kd[kbase + ci * cout..kbase + (ci + 1) * cout];
                        for (acc, &kv) in o.iter_mut().zip(krow) {
                            *acc += v * kv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

/// `input · weight + bias` for `input: [n]`, `weight: [n, m]`, `bias: [m]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let n = input.len();
    let m = match weight.shape() {
        [r, c] if *r == n => *c,
        s => {
            return Err(Error::shape(
                "dense",
                format!("weight {s:?} incompatible with input of length {n}"),
            ))
        }
    };
    let mut out = match bias {
        Some(b) if b.len() == m => b.data().to_vec(),
        Some(b) => {
            return Err(Error::shape(
                "dense",
                format!("bias of length {} for {m} outputs", b.len()),
            ))
        }
        None => vec![0.0; m],
    };
    let wd = weight.data();
    for (i, &xi) in input.data().iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&wd[i * m..(i + 1) * m]) {
            *o += xi * wv;
        }
    }
    Ok(Tensor::vector(out))
}

/// Per-channel mean of an `[H, W, C]` map.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let c = match input.shape() {
        [_, _, c] => *c,
        s => return Err(Error::shape("global_avg_pool", format!("input must be [H,W,C], got {s:?}"))),
    };
    let pixels = input.len() / c;
    let mut out = vec![0.0; c];
    for px in input.data().chunks_exact(c) {
        for (o, v) in out.iter_mut().zip(px) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= pixels as f64);
    Ok(Tensor::vector(out))
}

/// Standardizes all values of `input` together, then applies a per-channel
/// `gain` and `shift` along the last axis.
///
/// Returns the output plus the standardized values and `1/σ` for reuse in
/// the backward pass.
pub(crate) fn layer_norm_parts(
    input: &Tensor,
    gain: &Tensor,
    shift: &Tensor,
) -> Result<(Tensor, Vec<f64>, f64)> {
    let c = *input.shape().last().unwrap_or(&0);
    if gain.len() != c || shift.len() != c {
        return Err(Error::shape(
            "normalize",
            format!(
                "gain/shift lengths {}/{} for {c} channels",
                gain.len(),
                shift.len()
            ),
        ));
    }
    let n = input.len() as f64;
    let mean = input.data().iter().sum::<f64>() / n;
    let var = input.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + NORM_EPS).sqrt();
    let normed: Vec<f64> = input.data().iter().map(|v| (v - mean) * inv_std).collect();
    let mut out = normed.clone();
    for row in out.chunks_exact_mut(c) {
        for ((o, g), s) in row.iter_mut().zip(gain.data()).zip(shift.data()) {
            *o = *o * g + s;
        }
    }
    Ok((Tensor::new(input.shape().to_vec(), out)?, normed, inv_std))
}

pub fn normalize_layer(input: &Tensor, gain: &Tensor, shift: &Tensor) -> Result<Tensor> {
    layer_norm_parts(input, gain, shift).map(|(t, _, _)| t)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
