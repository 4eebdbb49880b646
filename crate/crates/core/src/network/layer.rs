use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::conv::{conv2d_backward_opt, conv2d_forward_at};
use crate::tensor::{conv2d_forward, leaky_relu_backward, leaky_relu_forward, KernelBank, Real, Tensor};

use super::config::LayerSpec;

/// Zero-mean uniform weights with variance `1 / fan_in`, zero biases.
pub(crate) fn init_bank<T: Real, R: Rng>(rng: &mut R, out: usize, inp: usize, kernel: usize) -> Result<KernelBank<T>> {
    let mut bank = KernelBank::zeros(out, inp, kernel, kernel)?;
    let bound = (3.0 / bank.fan_in() as f64).sqrt();
    for w in bank.weights.iter_mut() {
        *w = T::of(rng.gen_range(-bound..bound));
    }
    Ok(bank)
}

/// Convolution followed by an optional leaky ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub kernels: KernelBank<T>,
    pub activation_slope: T,
    pub has_activation: bool,
}

/// What a training forward pass keeps for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LayerCache<T> {
    input: Tensor<T>,
    pre_activation: Option<Tensor<T>>,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(kernels: KernelBank<T>, activation_slope: T, has_activation: bool) -> Result<Self> {
        if !(activation_slope > T::zero() && activation_slope < T::one()) {
            return Err(Error::Config(format!("leaky slope must lie in (0, 1), got {activation_slope}")));
        }
        Ok(ConvLayer { kernels, activation_slope, has_activation })
    }

    pub(crate) fn init<R: Rng>(rng: &mut R, in_channels: usize, spec: LayerSpec, slope: T, has_activation: bool) -> Result<Self> {
        let kernels = init_bank(rng, spec.channels, in_channels, spec.kernel)?;
        Self::new(kernels, slope, has_activation)
    }

    /// (kernel size, output channels)
    pub fn spec(&self) -> LayerSpec {
        LayerSpec { kernel: self.kernels.kernel_h(), channels: self.kernels.out_channels() }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let pre = conv2d_forward(input, &self.kernels)?;
        if self.has_activation {
            leaky_relu_forward(&pre, self.activation_slope)
        } else {
            Ok(pre)
        }
    }

    /// [`forward`](Self::forward) at the flagged rows × columns only; zero
    /// elsewhere.
    pub(crate) fn forward_at(&self, input: &Tensor<T>, rows: &[bool], cols: &[bool]) -> Result<Tensor<T>> {
        let pre = conv2d_forward_at(input, &self.kernels, rows, cols)?;
        if self.has_activation {
            leaky_relu_forward(&pre, self.activation_slope)
        } else {
            Ok(pre)
        }
    }

    pub(crate) fn forward_train(&self, input: Tensor<T>) -> Result<(Tensor<T>, LayerCache<T>)> {
        let pre = conv2d_forward(&input, &self.kernels)?;
        if self.has_activation {
            let out = leaky_relu_forward(&pre, self.activation_slope)?;
            Ok((out, LayerCache { input, pre_activation: Some(pre) }))
        } else {
            Ok((pre.clone(), LayerCache { input, pre_activation: None }))
        }
    }

    /// Returns the input gradient (when requested) and `[weights, bias]`
    /// gradients.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache<T>,
        grad_out: &Tensor<T>,
        need_input: bool,
    ) -> Result<(Option<Tensor<T>>, [Vec<T>; 2])> {
        let grad_pre = match &cache.pre_activation {
            Some(pre) => leaky_relu_backward(pre, self.activation_slope, grad_out)?,
            None => grad_out.clone(),
        };
        let g = conv2d_backward_opt(&cache.input, &self.kernels, &grad_pre, need_input)?;
        Ok((g.input, [g.weights, g.bias]))
    }

    pub(crate) fn params(&self) -> [&[T]; 2] {
        [&self.kernels.weights, &self.kernels.bias]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [T]; 2] {
        [&mut self.kernels.weights, &mut self.kernels.bias]
    }

    pub fn cast<U: Real>(&self) -> ConvLayer<U> {
        ConvLayer {
            kernels: self.kernels.cast(),
            activation_slope: U::of(self.activation_slope.as_f64()),
            has_activation: self.has_activation,
        }
    }
}

/// A sequence of convolution layers applied at one pyramid level.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain<T> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Real> Chain<T> {
    pub fn new(layers: Vec<ConvLayer<T>>) -> Result<Self> {
        check_stack(&layers, "chain")?;
        Ok(Chain { layers })
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].kernels.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].kernels.out_channels()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    /// As [`forward`](Self::forward), but the last layer is evaluated only
    /// at the flagged rows × columns; the rest of the output is zero.
    pub(crate) fn forward_at(&self, input: &Tensor<T>, rows: &[bool], cols: &[bool]) -> Result<Tensor<T>> {
        let (last, body) = self.layers.split_last().expect("validated non-empty");
        let mut x = input.clone();
        for layer in body {
            x = layer.forward(&x)?;
        }
        last.forward_at(&x, rows, cols)
    }

    pub(crate) fn forward_train(&self, input: Tensor<T>) -> Result<(Tensor<T>, Vec<LayerCache<T>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input;
        for layer in &self.layers {
            let (y, cache) = layer.forward_train(x)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// Appends parameter gradients in declaration order to `grads`.
    pub(crate) fn backward(
        &self,
        caches: &[LayerCache<T>],
        grad_out: Tensor<T>,
        need_input: bool,
        grads: &mut Vec<Vec<T>>,
    ) -> Result<Option<Tensor<T>>> {
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = Some(grad_out);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let upstream = g.take().expect("gradient flows to every layer but the first");
            let (gi, gp) = layer.backward(&caches[i], &upstream, i > 0 || need_input)?;
            per_layer.push(gp);
            g = gi;
        }
        for [w, b] in per_layer.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        Ok(g)
    }

    pub(crate) fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn cast<U: Real>(&self) -> Chain<U> {
        Chain { layers: self.layers.iter().map(ConvLayer::cast).collect() }
    }
}

/// Layers must be non-empty and chain channel counts.
pub(crate) fn check_stack<T: Real>(layers: &[ConvLayer<T>], what: &str) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Config(format!("{what} has no layers")));
    }
    for (i, pair) in layers.windows(2).enumerate() {
        let (a, b) = (&pair[0].kernels, &pair[1].kernels);
        if a.out_channels() != b.in_channels() {
            return Err(Error::Config(format!(
                "{what} layer {} outputs {} channels but layer {} expects {}",
                i,
                a.out_channels(),
                i + 1,
                b.in_channels()
            )));
        }
    }
    Ok(())
}
