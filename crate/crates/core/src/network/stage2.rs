//! The full-resolution refinement stage.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{concat_channels, resize_bilinear, sigmoid, Real, Tensor};

use super::center;
use super::config::{LayerSpec, RefineInput};
use super::layer::{check_stack, ConvLayer, LayerCache};

#[derive(Clone, Debug, PartialEq)]
pub struct RefineNet<T> {
    /// The last layer has no activation; its single output channel goes
    /// through a sigmoid.
    pub layers: Vec<ConvLayer<T>>,
    pub input: RefineInput,
}

pub(crate) struct Stage2Cache<T> {
    layers: Vec<LayerCache<T>>,
    pub(crate) probabilities: Tensor<T>,
}

impl<T: Real> RefineNet<T> {
    pub fn new(layers: Vec<ConvLayer<T>>, input: RefineInput) -> Result<Self> {
        check_stack(&layers, "refine")?;
        let first = &layers[0].kernels;
        let last = &layers[layers.len() - 1];
        if first.in_channels() != input.channels() {
            return Err(Error::Config(format!(
                "refinement input {:?} has {} channels but the first layer expects {}",
                input,
                input.channels(),
                first.in_channels()
            )));
        }
        if last.kernels.out_channels() != 1 || last.has_activation {
            return Err(Error::Config("the last refinement layer must be a linear 1-channel output".into()));
        }
        Ok(RefineNet { layers, input })
    }

    pub(crate) fn init<R: Rng>(rng: &mut R, specs: &[LayerSpec], input: RefineInput, slope: f64) -> Result<Self> {
        let slope = T::of(slope);
        let mut layers = Vec::with_capacity(specs.len());
        let mut inp = input.channels();
        for (i, spec) in specs.iter().enumerate() {
            layers.push(ConvLayer::init(rng, inp, *spec, slope, i + 1 < specs.len())?);
            inp = spec.channels;
        }
        Self::new(layers, input)
    }

    /// Stacks the network input: image channels and/or the coarse map
    /// bilinearly upscaled to the image resolution, centered.
    pub fn assemble_input(&self, image: &Tensor<T>, coarse: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        if image.channels() != 3 {
            return Err(Error::invalid(format!("refinement needs an RGB image, got {}", image.shape())));
        }
        let up = match (self.input.uses_coarse(), coarse) {
            (true, Some(c)) if c.channels() == 1 => Some(resize_bilinear(c, image.height(), image.width())?),
            (true, Some(c)) => {
                return Err(Error::invalid(format!("coarse map must have 1 channel, got {}", c.shape())));
            }
            (true, None) => return Err(Error::invalid(format!("{:?} refinement needs a coarse map", self.input))),
            (false, _) => None,
        };
        let stacked = match (self.input, up) {
            (RefineInput::ImageAndCoarse, Some(up)) => concat_channels(&[image, &up])?,
            (RefineInput::CoarseOnly, Some(up)) => up,
            _ => image.clone(),
        };
        Ok(center(&stacked))
    }

    pub fn forward(&self, image: &Tensor<T>, coarse: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let mut x = self.assemble_input(image, coarse)?;
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(sigmoid(&x))
    }

    pub(crate) fn forward_train(&self, image: &Tensor<T>, coarse: Option<&Tensor<T>>) -> Result<Stage2Cache<T>> {
        let mut x = self.assemble_input(image, coarse)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward_train(x)?;
            layers.push(cache);
            x = y;
        }
        Ok(Stage2Cache { layers, probabilities: sigmoid(&x) })
    }

    pub(crate) fn backward(&self, cache: &Stage2Cache<T>, grad_logit: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = grad_logit.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gi, gp) = layer.backward(&cache.layers[i], &g, i > 0)?;
            per_layer.push(gp);
            if let Some(gi) = gi {
                g = gi;
            }
        }
        Ok(per_layer.into_iter().rev().flatten().collect())
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(ConvLayer::spec).collect()
    }

    pub fn cast<U: Real>(&self) -> RefineNet<U> {
        RefineNet { layers: self.layers.iter().map(ConvLayer::cast).collect(), input: self.input }
    }
}
