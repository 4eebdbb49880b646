//! Samples, image I/O, dataset manifests and the synthetic hand generator.

pub mod manifest;
pub mod netpbm;
pub mod synth;

pub use manifest::{split_assignment, split_dataset, split_samples, train_count, write_dataset, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE};
pub use synth::{generate_dataset, generate_sample, SkinModel, SynthConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An RGB image (3×H×W in `[0, 1]`) and its binary hand mask (1×H×W).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
    pub id: String,
}

impl Sample {
    pub fn new(image: Tensor<f32>, mask: Tensor<f32>, id: impl Into<String>) -> Result<Self> {
        if image.channels() != 3 {
            return Err(Error::invalid(format!("sample image must have 3 channels, got {}", image.shape())));
        }
        if mask.channels() != 1 || !mask.shape().same_spatial(&image.shape()) {
            return Err(Error::shape("sample", image.shape(), mask.shape()));
        }
        if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("sample mask must be binary"));
        }
        Ok(Sample { image, mask, id: id.into() })
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }
}

/// Stream-splitting rule shared by everything random: the generator for
/// item `index` under `seed` is ChaCha8 seeded with `seed` on stream
/// `index`. Items can then be produced in any order with identical results.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
