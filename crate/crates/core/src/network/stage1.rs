//! The coarse stage: one convolution chain per pyramid level, merged at the
//! coarsest level and mapped to a probability per pixel by a 1×1 logistic
//! head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::conv::conv2d_backward_opt;
use crate::tensor::resize::sampled_positions;
use crate::tensor::{
    concat_channels, conv2d_forward, resize_bilinear, resize_bilinear_backward, sigmoid, split_channels, KernelBank,
    Real, Shape, Tensor,
};

use super::config::{check_factors, scaled_dim, ArchConfig};
use super::center;
use super::layer::{init_bank, Chain, ConvLayer, LayerCache};

#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleNet<T> {
    pub chains: Vec<Chain<T>>,
    /// 1×1 kernels from the concatenated chain features to one logit.
    pub head: KernelBank<T>,
    pub pyramid_factors: Vec<usize>,
}

pub(crate) struct Stage1Cache<T> {
    chains: Vec<ChainCache<T>>,
    head_input: Tensor<T>,
    pub(crate) probabilities: Tensor<T>,
}

struct ChainCache<T> {
    layers: Vec<LayerCache<T>>,
    /// Spatial size of the chain output before merging.
    level: (usize, usize),
}

impl<T: Real> MultiScaleNet<T> {
    pub fn new(chains: Vec<Chain<T>>, head: KernelBank<T>, pyramid_factors: Vec<usize>) -> Result<Self> {
        check_factors(&pyramid_factors)?;
        if chains.len() != pyramid_factors.len() {
            return Err(Error::Config(format!(
                "{} chains for {} pyramid factors",
                chains.len(),
                pyramid_factors.len()
            )));
        }
        let feature_channels: usize = chains.iter().map(Chain::out_channels).sum();
        if head.in_channels() != feature_channels || head.out_channels() != 1 || head.kernel_h() != 1 || head.kernel_w() != 1 {
            return Err(Error::Config(format!(
                "head must map {feature_channels} channels to 1 with 1x1 kernels, got {}->{} {}x{}",
                head.in_channels(),
                head.out_channels(),
                head.kernel_h(),
                head.kernel_w()
            )));
        }
        if chains.iter().any(|c| c.in_channels() != 3) {
            return Err(Error::Config("stage-1 chains take 3-channel images".into()));
        }
        Ok(MultiScaleNet { chains, head, pyramid_factors })
    }

    pub(crate) fn init<R: Rng>(rng: &mut R, cfg: &ArchConfig) -> Result<Self> {
        let slope = T::of(cfg.leaky_slope);
        let mut chains = Vec::with_capacity(cfg.pyramid_factors.len());
        for _ in &cfg.pyramid_factors {
            let mut layers = Vec::with_capacity(cfg.chain.len());
            let mut inp = 3;
            for spec in &cfg.chain {
                layers.push(ConvLayer::init(rng, inp, *spec, slope, true)?);
                inp = spec.channels;
            }
            chains.push(Chain::new(layers)?);
        }
        let features = cfg.chain.last().map(|l| l.channels).unwrap_or(0) * chains.len();
        let head = init_bank(rng, 1, features, 1)?;
        Self::new(chains, head, cfg.pyramid_factors.clone())
    }

    pub fn coarse_factor(&self) -> usize {
        *self.pyramid_factors.last().expect("validated non-empty")
    }

    /// Output (height, width) for a full-resolution input.
    pub fn coarse_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let f = self.coarse_factor();
        (scaled_dim(height, f), scaled_dim(width, f))
    }

    /// (height, width) of each pyramid level, finest first.
    pub fn pyramid_levels(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        self.pyramid_factors.iter().map(|&f| (scaled_dim(height, f), scaled_dim(width, f))).collect()
    }

    fn check_image(&self, image: &Tensor<T>) -> Result<()> {
        let f = self.coarse_factor();
        if image.channels() != 3 || image.height() < f || image.width() < f {
            return Err(Error::invalid(format!(
                "stage 1 needs a 3-channel image of at least {f}x{f} pixels, got {}",
                image.shape()
            )));
        }
        Ok(())
    }

    /// Probability map at `1/coarse_factor` resolution (ceiling rule).
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_image(image)?;
        let (ch, cw) = self.coarse_dims(image.height(), image.width());
        let levels = self.pyramid_levels(image.height(), image.width());
        let mut features = Vec::with_capacity(self.chains.len());
        for (chain, &(lh, lw)) in self.chains.iter().zip(&levels) {
            let level = center(&resize_bilinear(image, lh, lw)?);
            // only the chain outputs the downscaling reads are computed
            let (rows, cols) = (sampled_positions(lh, ch), sampled_positions(lw, cw));
            let f = if rows.iter().chain(&cols).all(|&u| u) {
                chain.forward(&level)?
            } else {
                chain.forward_at(&level, &rows, &cols)?
            };
            features.push(resize_bilinear(&f, ch, cw)?);
        }
        let merged = concat_channels(&features.iter().collect::<Vec<_>>())?;
        Ok(sigmoid(&conv2d_forward(&merged, &self.head)?))
    }

    pub(crate) fn forward_train(&self, image: &Tensor<T>) -> Result<Stage1Cache<T>> {
        self.check_image(image)?;
        let (ch, cw) = self.coarse_dims(image.height(), image.width());
        let levels = self.pyramid_levels(image.height(), image.width());
        let mut caches = Vec::with_capacity(self.chains.len());
        let mut features = Vec::with_capacity(self.chains.len());
        for (chain, &(lh, lw)) in self.chains.iter().zip(&levels) {
            let level = center(&resize_bilinear(image, lh, lw)?);
            let (f, layers) = chain.forward_train(level)?;
            features.push(resize_bilinear(&f, ch, cw)?);
            caches.push(ChainCache { layers, level: (lh, lw) });
        }
        let head_input = concat_channels(&features.iter().collect::<Vec<_>>())?;
        let probabilities = sigmoid(&conv2d_forward(&head_input, &self.head)?);
        Ok(Stage1Cache { chains: caches, head_input, probabilities })
    }

    /// Parameter gradients (declaration order) from the loss gradient with
    /// respect to the head logits.
    pub(crate) fn backward(&self, cache: &Stage1Cache<T>, grad_logit: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let head = conv2d_backward_opt(&cache.head_input, &self.head, grad_logit, true)?;
        let counts: Vec<usize> = self.chains.iter().map(Chain::out_channels).collect();
        let parts = split_channels(head.input.as_ref().expect("requested"), &counts)?;
        let mut grads = Vec::with_capacity(self.param_tensors());
        for ((chain, cc), g) in self.chains.iter().zip(&cache.chains).zip(parts) {
            let g = resize_bilinear_backward(&g, cc.level.0, cc.level.1)?;
            chain.backward(&cc.layers, g, false, &mut grads)?;
        }
        grads.push(head.weights);
        grads.push(head.bias);
        Ok(grads)
    }

    fn param_tensors(&self) -> usize {
        self.chains.iter().map(|c| 2 * c.layers.len()).sum::<usize>() + 2
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut p: Vec<&[T]> = self.chains.iter().flat_map(Chain::params).collect();
        p.push(&self.head.weights);
        p.push(&self.head.bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p: Vec<&mut [T]> = self.chains.iter_mut().flat_map(Chain::params_mut).collect();
        p.push(&mut self.head.weights);
        p.push(&mut self.head.bias);
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> MultiScaleNet<U> {
        MultiScaleNet {
            chains: self.chains.iter().map(Chain::cast).collect(),
            head: self.head.cast(),
            pyramid_factors: self.pyramid_factors.clone(),
        }
    }
}

/// Stage-1 training target: area-average the mask down to `(h, w)` and
/// threshold at 0.5.
pub fn coarse_target<T: Real>(mask: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let avg = area_downsample(mask, h, w)?;
    Ok(avg.map(|v| if v.as_f64() >= 0.5 { T::one() } else { T::zero() }))
}

/// Box-filter downsampling with fractional pixel coverage.
pub fn area_downsample<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 || out_h > input.height() || out_w > input.width() {
        return Err(Error::invalid(format!(
            "area downsampling {} to {out_h}x{out_w} is not a reduction",
            input.shape()
        )));
    }
    let wy = coverage(input.height(), out_h);
    let wx = coverage(input.width(), out_w);
    let mut out = Tensor::zeros(Shape { channels: input.channels(), height: out_h, width: out_w });
    for c in 0..input.channels() {
        for (oy, ys) in wy.iter().enumerate() {
            for (ox, xs) in wx.iter().enumerate() {
                let mut acc = 0.0;
                let mut area = 0.0;
                for &(y, fy) in ys {
                    for &(x, fx) in xs {
                        acc += input.get(c, y, x).as_f64() * fy * fx;
                        area += fy * fx;
                    }
                }
                out.set(c, oy, ox, T::of(acc / area));
            }
        }
    }
    Ok(out)
}

/// For each output cell, the source indices it overlaps with their overlap
/// lengths.
fn coverage(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let (a, b) = (i as f64 * scale, (i + 1) as f64 * scale);
            let lo = a.floor() as usize;
            let hi = (b.ceil() as usize).min(src);
            (lo..hi)
                .filter_map(|s| {
                    let overlap = (b.min(s as f64 + 1.0) - a.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_downsample_averages_blocks() {
        let t = Tensor::from_fn(Shape::new(1, 4, 4).unwrap(), |_, y, x| if y < 2 && x < 2 { 1.0f64 } else { 0.0 });
        let d = area_downsample(&t, 2, 2).unwrap();
        assert_eq!(d.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn area_downsample_fractional_coverage() {
        // 3 -> 2: cells cover [0,1.5) and [1.5,3)
        let t = Tensor::from_vec(Shape::new(1, 1, 3).unwrap(), vec![1.0f64, 0.0, 0.0]).unwrap();
        let d = area_downsample(&t, 1, 2).unwrap();
        assert!((d.get(0, 0, 0) - 1.0 / 1.5).abs() < 1e-12);
        assert_eq!(d.get(0, 0, 1), 0.0);
    }

    #[test]
    fn coarse_target_thresholds_at_half() {
        let t = Tensor::from_vec(Shape::new(1, 2, 2).unwrap(), vec![1.0f32, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(coarse_target(&t, 1, 1).unwrap().data(), &[1.0]);
        let t = Tensor::from_vec(Shape::new(1, 2, 2).unwrap(), vec![1.0f32, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(coarse_target(&t, 1, 1).unwrap().data(), &[0.0]);
    }
}
