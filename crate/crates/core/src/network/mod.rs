//! Network architectures: the multiscale coarse stage, the refinement
//! stage, the two-stage cascade, and the ablation variants.

pub mod config;
mod layer;
pub mod serialize;
mod stage1;
mod stage2;

pub use config::{ArchConfig, LayerSpec, RefineInput};
pub use layer::{Chain, ConvLayer};
pub use serialize::{decode_model, encode_model, load_model, save_model};
pub use stage1::{area_downsample, coarse_target, MultiScaleNet};
pub use stage2::RefineNet;


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use config::{DEFAULT_REFINE, FULLRES_REFINE};

/// Stage 1 at `1/coarse_output_factor` resolution followed by the
/// full-resolution refinement stage.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel<T> {
    pub part1: MultiScaleNet<T>,
    pub part2: RefineNet<T>,
    pub coarse_output_factor: usize,
}

/// Per-layer (kernel, channels) listing of a cascade.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchReport {
    pub chains: Vec<Vec<(usize, usize)>>,
    pub head_in_channels: usize,
    pub refine: Vec<(usize, usize)>,
    pub refine_input: RefineInput,
    pub pyramid_factors: Vec<usize>,
}

impl<T: Real> CascadeModel<T> {
    pub fn new(part1: MultiScaleNet<T>, part2: RefineNet<T>) -> Result<Self> {
        if part2.input == RefineInput::ImageOnly {
            return Err(Error::Config("a cascade's second stage must consume the coarse map".into()));
        }
        let coarse_output_factor = part1.coarse_factor();
        Ok(CascadeModel { part1, part2, coarse_output_factor })
    }

    /// Seeded initialization; identical seeds give bit-identical models.
    pub fn init(seed: u64, cfg: &ArchConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part1 = MultiScaleNet::init(&mut rng, cfg)?;
        let part2 = RefineNet::init(&mut rng, &cfg.refine, cfg.refine_input, cfg.leaky_slope)?;
        Self::new(part1, part2)
    }

    pub fn part1_forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        self.part1.forward(image)
    }

    /// Refines a coarse map that must sit at exactly the stage-1 output
    /// resolution for `image`.
    pub fn part2_forward(&self, image: &Tensor<T>, coarse: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_coarse(image, coarse)?;
        self.part2.forward(image, Some(coarse))
    }

    pub(crate) fn check_coarse(&self, image: &Tensor<T>, coarse: &Tensor<T>) -> Result<()> {
        let (h, w) = self.part1.coarse_dims(image.height(), image.width());
        if coarse.channels() != 1 || coarse.height() != h || coarse.width() != w {
            return Err(Error::invalid(format!(
                "coarse map {} does not match 1x{h}x{w} expected for image {}",
                coarse.shape(),
                image.shape()
            )));
        }
        Ok(())
    }

    /// Returns (coarse, fine) probability maps.
    pub fn forward(&self, image: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let coarse = self.part1_forward(image)?;
        let fine = self.part2.forward(image, Some(&coarse))?;
        Ok((coarse, fine))
    }

    pub fn architecture(&self) -> ArchReport {
        ArchReport {
            chains: self
                .part1
                .chains
                .iter()
                .map(|c| c.layers.iter().map(|l| (l.spec().kernel, l.spec().channels)).collect())
                .collect(),
            head_in_channels: self.part1.head.in_channels(),
            refine: self.part2.specs().iter().map(|s| (s.kernel, s.channels)).collect(),
            refine_input: self.part2.input,
            pyramid_factors: self.part1.pyramid_factors.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.part1.param_count() + self.part2.param_count()
    }

    pub fn cast<U: Real>(&self) -> CascadeModel<U> {
        CascadeModel {
            part1: self.part1.cast(),
            part2: self.part2.cast(),
            coarse_output_factor: self.coarse_output_factor,
        }
    }
}

pub(crate) fn center<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let c = T::of(config::INPUT_CENTER);
    t.map(|v| v - c)
}

/// Full-resolution single-stage model: 16/16/1 feature maps with 5×5
/// filters on the RGB image only.
pub fn build_fullres_variant<T: Real>(seed: u64) -> Result<RefineNet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RefineNet::init(&mut rng, &FULLRES_REFINE, RefineInput::ImageOnly, config::DEFAULT_LEAKY_SLOPE)
}

/// Default refinement stack fed only with the upscaled coarse map.
pub fn build_no_image_variant<T: Real>(seed: u64) -> Result<RefineNet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RefineNet::init(&mut rng, &DEFAULT_REFINE, RefineInput::CoarseOnly, config::DEFAULT_LEAKY_SLOPE)
}

/// Default refinement stack on image plus coarse map.
pub fn build_refine<T: Real>(seed: u64) -> Result<RefineNet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RefineNet::init(&mut rng, &DEFAULT_REFINE, RefineInput::ImageAndCoarse, config::DEFAULT_LEAKY_SLOPE)
}
