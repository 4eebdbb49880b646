//! Bilinear resampling with the pixel-center convention (no corner
//! alignment): output pixel `i` samples source coordinate
//! `(i + 0.5) · in / out − 0.5`, clamped to the valid range.

use super::{Real, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn taps<T: Real>(src_len: usize, dst_len: usize) -> Vec<Tap<T>> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            Tap { lo, hi, frac: T::of(s - lo as f64) }
        })
        .collect()
}

/// Which of `src_len` source positions resizing to `dst_len` reads.
pub(crate) fn sampled_positions(src_len: usize, dst_len: usize) -> Vec<bool> {
    let mut used = vec![src_len == dst_len; src_len];
    for t in taps::<f64>(src_len, dst_len) {
        used[t.lo] = true;
        used[t.hi] = true;
    }
    used
}

fn check_dims(out_h: usize, out_w: usize) -> Result<()> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("resize target must be positive, got {out_h}x{out_w}")));
    }
    Ok(())
}

pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    check_dims(out_h, out_w)?;
    if out_h == input.height() && out_w == input.width() {
        return Ok(input.clone());
    }
    let (h, w) = (input.height(), input.width());
    let ty = taps::<T>(h, out_h);
    let tx = taps::<T>(w, out_w);
    let mut out = Tensor::zeros(Shape { channels: input.channels(), height: out_h, width: out_w });
    let one = T::one();
    for c in 0..input.channels() {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for (y, ry) in ty.iter().enumerate() {
            let r0 = &src[ry.lo * w..(ry.lo + 1) * w];
            let r1 = &src[ry.hi * w..(ry.hi + 1) * w];
            for (x, rx) in tx.iter().enumerate() {
                let top = r0[rx.lo] * (one - rx.frac) + r0[rx.hi] * rx.frac;
                let bottom = r1[rx.lo] * (one - rx.frac) + r1[rx.hi] * rx.frac;
                dst[y * out_w + x] = top * (one - ry.frac) + bottom * ry.frac;
            }
        }
    }
    Ok(out)
}

/// Exact adjoint of [`resize_bilinear`]: spreads each output gradient back
/// onto the four source pixels with the forward interpolation weights.
pub fn resize_bilinear_backward<T: Real>(grad_out: &Tensor<T>, in_h: usize, in_w: usize) -> Result<Tensor<T>> {
    check_dims(in_h, in_w)?;
    if grad_out.height() == in_h && grad_out.width() == in_w {
        return Ok(grad_out.clone());
    }
    let (out_h, out_w) = (grad_out.height(), grad_out.width());
    let ty = taps::<T>(in_h, out_h);
    let tx = taps::<T>(in_w, out_w);
    let mut grad = Tensor::zeros(Shape { channels: grad_out.channels(), height: in_h, width: in_w });
    let one = T::one();
    for c in 0..grad_out.channels() {
        let g = grad_out.channel(c);
        let dst = grad.channel_mut(c);
        for (y, ry) in ty.iter().enumerate() {
            for (x, rx) in tx.iter().enumerate() {
                let v = g[y * out_w + x];
                let top = v * (one - ry.frac);
                let bottom = v * ry.frac;
                dst[ry.lo * in_w + rx.lo] += top * (one - rx.frac);
                dst[ry.lo * in_w + rx.hi] += top * rx.frac;
                dst[ry.hi * in_w + rx.lo] += bottom * (one - rx.frac);
                dst[ry.hi * in_w + rx.hi] += bottom * rx.frac;
            }
        }
    }
    Ok(grad)
}
