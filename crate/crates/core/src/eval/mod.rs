//! Evaluation: accuracy, ROC, threshold sweeps, difference maps, the color
//! baseline, and plain-text report writers.

pub mod color;
pub mod metrics;
pub mod report;

pub use color::{ColorModel, DEFAULT_BINS};
pub use metrics::{
    accuracy, binarize, confusion, diff_map, pooled_confusion, roc_curve, threshold_at, threshold_counts,
    threshold_sweep, ConfusionCounts, DiffMap, RocPoint, ThresholdSweep, PLATEAU_TOLERANCE,
};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::network::{coarse_target, CascadeModel};
use crate::tensor::{resize_bilinear, Tensor};

/// Decision threshold used for every headline accuracy.
pub const THRESHOLD: f64 = 0.5;

/// Cascade outputs for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeOutput {
    pub coarse: Tensor<f32>,
    /// Coarse map bilinearly upscaled to the image resolution.
    pub upscaled: Tensor<f32>,
    pub fine: Tensor<f32>,
}

pub fn run_cascade(model: &CascadeModel<f32>, image: &Tensor<f32>) -> Result<CascadeOutput> {
    let (coarse, fine) = model.forward(image)?;
    let upscaled = resize_bilinear(&coarse, image.height(), image.width())?;
    Ok(CascadeOutput { coarse, upscaled, fine })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeScores {
    /// Coarse map against the area-downsampled mask.
    pub coarse_accuracy: f64,
    /// Upscaled coarse map against the full-resolution mask.
    pub upscaled_accuracy: f64,
    pub fine: ConfusionCounts,
}

impl CascadeScores {
    pub fn fine_accuracy(&self) -> f64 {
        self.fine.accuracy()
    }
}

/// Runs the cascade over `samples`, returning per-image outputs and pooled
/// scores at `THRESHOLD`.
pub fn evaluate_cascade(model: &CascadeModel<f32>, samples: &[Sample]) -> Result<(Vec<CascadeOutput>, CascadeScores)> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut outputs = Vec::with_capacity(samples.len());
    let (mut coarse, mut upscaled, mut fine) =
        (ConfusionCounts::default(), ConfusionCounts::default(), ConfusionCounts::default());
    for s in samples {
        let out = run_cascade(model, &s.image)?;
        let target = coarse_target(&s.mask, out.coarse.height(), out.coarse.width())?;
        coarse = coarse.merge(&confusion(&out.coarse, &target, THRESHOLD)?);
        upscaled = upscaled.merge(&confusion(&out.upscaled, &s.mask, THRESHOLD)?);
        fine = fine.merge(&confusion(&out.fine, &s.mask, THRESHOLD)?);
        outputs.push(out);
    }
    let scores =
        CascadeScores { coarse_accuracy: coarse.accuracy(), upscaled_accuracy: upscaled.accuracy(), fine };
    Ok((outputs, scores))
}

/// Pooled diff-map statistics at `THRESHOLD`: (mismatches, boundary-band
/// fraction over all mismatches).
pub fn boundary_error_fraction(preds: &[Tensor<f32>], samples: &[Sample]) -> Result<(usize, f64)> {
    let (mut total, mut band) = (0usize, 0.0f64);
    for (p, s) in preds.iter().zip(samples) {
        let d = diff_map(&binarize(p, THRESHOLD), &s.mask)?;
        total += d.mismatches;
        band += d.boundary_fraction * d.mismatches as f64;
    }
    Ok((total, if total == 0 { 1.0 } else { band / total as f64 }))
}
