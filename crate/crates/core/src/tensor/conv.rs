//! Stride-1 zero same-padded 2-D convolution, lowered to GEMM through a
//! row-banded im2col buffer.

use super::{gemm_strided, KernelBank, Real, Shape, Tensor};
use crate::error::{Error, Result};

/// Upper bound on im2col buffer elements per band.
const BAND_ELEMENTS: usize = 1 << 18;
/// Layers with at most this many outputs skip im2col and GEMM.
const DIRECT_MAX_OUT: usize = 8;
/// Output pixels per band of the direct path; keeps the band in L1.
const DIRECT_BAND: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<Tensor<T>>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn check_input<T: Real>(input: &Tensor<T>, kernels: &KernelBank<T>) -> Result<()> {
    if input.channels() != kernels.in_channels() {
        let expected = Shape {
            channels: kernels.in_channels(),
            height: input.height(),
            width: input.width(),
        };
        return Err(Error::shape("conv2d", expected, input.shape()));
    }
    Ok(())
}

fn band_rows(k: usize, width: usize, height: usize) -> usize {
    (BAND_ELEMENTS / (k * width).max(1)).clamp(1, height)
}

/// Fills `cols` (K × rows·W, row-major) with the receptive fields of output
/// rows `y0..y1`.
fn im2col<T: Real>(input: &Tensor<T>, kh: usize, kw: usize, y0: usize, y1: usize, cols: &mut [T]) {
    let (h, w) = (input.height(), input.width());
    let (ph, pw) = (kh / 2, kw / 2);
    let npix = (y1 - y0) * w;
    let mut r = 0;
    for c in 0..input.channels() {
        let plane = input.channel(c);
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut cols[r * npix..(r + 1) * npix];
                // valid x range: 0 <= x + dx - pw < w
                let x_lo = pw.saturating_sub(dx).min(w);
                let x_hi = (w + pw).saturating_sub(dx).min(w);
                for (yi, yy) in (y0..y1).enumerate() {
                    let seg = &mut row[yi * w..(yi + 1) * w];
                    let sy = yy + dy;
                    if sy < ph || sy - ph >= h || x_lo >= x_hi {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(sy - ph) * w..(sy - ph + 1) * w];
                    seg[..x_lo].fill(T::zero());
                    seg[x_hi..].fill(T::zero());
                    let s0 = x_lo + dx - pw;
                    seg[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
                r += 1;
            }
        }
    }
}

/// Scatter-adds a column buffer back onto the input gradient (adjoint of
/// [`im2col`]).
fn col2im<T: Real>(cols: &[T], grad: &mut Tensor<T>, kh: usize, kw: usize, y0: usize, y1: usize) {
    let (h, w) = (grad.height(), grad.width());
    let (ph, pw) = (kh / 2, kw / 2);
    let npix = (y1 - y0) * w;
    let mut r = 0;
    for c in 0..grad.channels() {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &cols[r * npix..(r + 1) * npix];
                let x_lo = pw.saturating_sub(dx).min(w);
                let x_hi = (w + pw).saturating_sub(dx).min(w);
                for (yi, yy) in (y0..y1).enumerate() {
                    let sy = yy + dy;
                    if sy < ph || sy - ph >= h || x_lo >= x_hi {
                        continue;
                    }
                    let seg = &row[yi * w + x_lo..yi * w + x_hi];
                    let s0 = x_lo + dx - pw;
                    let plane = grad.channel_mut(c);
                    let dst = &mut plane[(sy - ph) * w + s0..(sy - ph) * w + s0 + seg.len()];
                    for (d, &s) in dst.iter_mut().zip(seg) {
                        *d += s;
                    }
                }
                r += 1;
            }
        }
    }
}

/// Shifted row updates straight from the input planes, for layers too
/// narrow to fill a GEMM register tile. `out` already holds the bias.
fn direct<T: Real>(input: &Tensor<T>, kernels: &KernelBank<T>, out: &mut Tensor<T>) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was just detected
            return unsafe { direct_avx512(input, kernels, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above
            return unsafe { direct_avx2(input, kernels, out) };
        }
    }
    direct_body(input, kernels, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
fn direct_avx512<T: Real>(input: &Tensor<T>, kernels: &KernelBank<T>, out: &mut Tensor<T>) {
    direct_body(input, kernels, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn direct_avx2<T: Real>(input: &Tensor<T>, kernels: &KernelBank<T>, out: &mut Tensor<T>) {
    direct_body(input, kernels, out)
}

// Separate multiplies and adds in every build, so results do not depend on
// which instruction set ran.
#[inline(always)]
fn direct_body<T: Real>(input: &Tensor<T>, kernels: &KernelBank<T>, out: &mut Tensor<T>) {
    let (h, w) = (input.height(), input.width());
    let (kh, kw) = (kernels.kernel_h(), kernels.kernel_w());
    let (ph, pw) = (kh / 2, kw / 2);
    let k = kernels.fan_in();
    let rows = (DIRECT_BAND / w.max(1)).clamp(1, h.max(1));
    for (oc, wrow) in kernels.weights.chunks_exact(k).enumerate() {
        let dst = out.channel_mut(oc);
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + rows).min(h);
            let mut taps = wrow.iter();
            for c in 0..input.channels() {
                let plane = input.channel(c);
                for dy in 0..kh {
                    for dx in 0..kw {
                        let wv = *taps.next().unwrap();
                        let x_lo = pw.saturating_sub(dx).min(w);
                        let x_hi = (w + pw).saturating_sub(dx).min(w);
                        if x_lo >= x_hi {
                            continue;
                        }
                        let s0 = x_lo + dx - pw;
                        for y in y0..y1 {
                            let sy = y + dy;
                            if sy < ph || sy - ph >= h {
                                continue;
                            }
                            let src = &plane[(sy - ph) * w + s0..(sy - ph) * w + s0 + (x_hi - x_lo)];
                            for (d, &v) in dst[y * w + x_lo..y * w + x_hi].iter_mut().zip(src) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
            y0 = y1;
        }
    }
}

/// `out[o,y,x] = bias[o] + Σ in[c, y+dy-kh/2, x+dx-kw/2] · w[o,c,dy,dx]` with
/// zeros outside the input.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, kernels: &KernelBank<T>) -> Result<Tensor<T>> {
    check_input(input, kernels)?;
    let (h, w) = (input.height(), input.width());
    let o = kernels.out_channels();
    let k = kernels.fan_in();
    let hw = h * w;
    let mut out = Tensor::zeros(Shape { channels: o, height: h, width: w });
    for (oc, &b) in kernels.bias.iter().enumerate() {
        out.channel_mut(oc).fill(b);
    }
    if o <= DIRECT_MAX_OUT {
        direct(input, kernels, &mut out);
        return Ok(out);
    }
    let rows = band_rows(k, w, h);
    let mut cols = vec![T::zero(); k * rows * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let npix = (y1 - y0) * w;
        let cols = &mut cols[..k * npix];
        im2col(input, kernels.kernel_h(), kernels.kernel_w(), y0, y1, cols);
        gemm_strided(
            o,
            k,
            npix,
            &kernels.weights,
            (k, 1),
            cols,
            (npix, 1),
            T::one(),
            &mut out.data_mut()[y0 * w..],
            (hw, 1),
        );
        y0 = y1;
    }
    Ok(out)
}

/// [`conv2d_forward`] evaluated only at pixels whose row and column are
/// both flagged; every other output is zero.
pub(crate) fn conv2d_forward_at<T: Real>(
    input: &Tensor<T>,
    kernels: &KernelBank<T>,
    rows: &[bool],
    cols: &[bool],
) -> Result<Tensor<T>> {
    check_input(input, kernels)?;
    let (h, w) = (input.height(), input.width());
    if rows.len() != h || cols.len() != w {
        return Err(Error::invalid(format!("pixel selection {}x{} does not match {h}x{w}", rows.len(), cols.len())));
    }
    let (kh, kw) = (kernels.kernel_h(), kernels.kernel_w());
    let (ph, pw) = (kh / 2, kw / 2);
    let pixels: Vec<(usize, usize)> = (0..h)
        .filter(|&y| rows[y])
        .flat_map(|y| (0..w).filter(|&x| cols[x]).map(move |x| (y, x)))
        .collect();
    let (o, k, n) = (kernels.out_channels(), kernels.fan_in(), pixels.len());
    let mut out = Tensor::zeros(Shape { channels: o, height: h, width: w });
    if n == 0 {
        return Ok(out);
    }
    let mut buf = vec![T::zero(); k * n];
    let mut r = 0;
    for c in 0..input.channels() {
        let plane = input.channel(c);
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut buf[r * n..(r + 1) * n];
                for (v, &(y, x)) in row.iter_mut().zip(&pixels) {
                    let (sy, sx) = (y + dy, x + dx);
                    if sy >= ph && sy - ph < h && sx >= pw && sx - pw < w {
                        *v = plane[(sy - ph) * w + sx - pw];
                    }
                }
                r += 1;
            }
        }
    }
    let mut dense: Vec<T> = kernels.bias.iter().flat_map(|&b| std::iter::repeat(b).take(n)).collect();
    gemm_strided(o, k, n, &kernels.weights, (k, 1), &buf, (n, 1), T::one(), &mut dense, (n, 1));
    for oc in 0..o {
        let plane = out.channel_mut(oc);
        for (&v, &(y, x)) in dense[oc * n..(oc + 1) * n].iter().zip(&pixels) {
            plane[y * w + x] = v;
        }
    }
    Ok(out)
}

/// Exact gradients of `Σ grad_output ⊙ conv2d_forward(input, kernels)`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &KernelBank<T>,
    grad_output: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    conv2d_backward_opt(input, kernels, grad_output, true)
}

/// As [`conv2d_backward`]; `need_input = false` skips the input gradient
/// (first layer of a network).
pub(crate) fn conv2d_backward_opt<T: Real>(
    input: &Tensor<T>,
    kernels: &KernelBank<T>,
    grad_output: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    check_input(input, kernels)?;
    let (h, w) = (input.height(), input.width());
    let o = kernels.out_channels();
    grad_output.expect_shape("conv2d_backward", Shape { channels: o, height: h, width: w })?;
    let k = kernels.fan_in();
    let hw = h * w;
    let (kh, kw) = (kernels.kernel_h(), kernels.kernel_w());

    let bias: Vec<T> = (0..o).map(|oc| grad_output.channel(oc).iter().copied().sum()).collect();
    let mut weights = vec![T::zero(); o * k];
    let mut grad_input = need_input.then(|| Tensor::zeros(input.shape()));

    let rows = band_rows(k, w, h);
    let mut cols = vec![T::zero(); k * rows * w];
    let mut grad_cols = if need_input { vec![T::zero(); k * rows * w] } else { Vec::new() };
    let g = grad_output.data();
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let npix = (y1 - y0) * w;
        let band = &g[y0 * w..];
        let cols = &mut cols[..k * npix];
        im2col(input, kh, kw, y0, y1, cols);
        // dW (o×k) += G_band (o×npix) · cols^T (npix×k)
        gemm_strided(o, npix, k, band, (hw, 1), cols, (1, npix), T::one(), &mut weights, (k, 1));
        if let Some(gi) = grad_input.as_mut() {
            let gc = &mut grad_cols[..k * npix];
            // dcols (k×npix) = W^T (k×o) · G_band (o×npix)
            gemm_strided(k, o, npix, &kernels.weights, (1, k), band, (hw, 1), T::zero(), gc, (npix, 1));
            col2im(gc, gi, kh, kw, y0, y1);
        }
        y0 = y1;
    }
    Ok(ConvGrads { input: grad_input, weights, bias })
}
