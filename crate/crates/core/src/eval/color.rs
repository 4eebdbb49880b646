//! Color-only baseline: a Bayes classifier over RGB histograms of hand and
//! background pixels, with add-one smoothing.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_BINS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ColorModel {
    pub bins: usize,
    /// Smoothed `P(color bin | hand)`, `bins³` entries, red-major.
    pub hand: Vec<f64>,
    pub background: Vec<f64>,
    /// Fraction of hand pixels in the training data.
    pub prior: f64,
}

fn bin(v: f32, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f32) as usize).min(bins - 1)
}

fn color_index(image: &Tensor<f32>, i: usize, bins: usize) -> usize {
    let plane = image.shape().plane();
    let d = image.data();
    (bin(d[i], bins) * bins + bin(d[plane + i], bins)) * bins + bin(d[2 * plane + i], bins)
}

impl ColorModel {
    pub fn fit(samples: &[Sample], bins: usize) -> Result<ColorModel> {
        if samples.is_empty() {
            return Err(Error::Empty("color model training set"));
        }
        if bins == 0 || bins > 256 {
            return Err(Error::invalid(format!("bins per channel must lie in 1..=256, got {bins}")));
        }
        let cells = bins * bins * bins;
        let mut hand = vec![0u64; cells];
        let mut background = vec![0u64; cells];
        for s in samples {
            for (i, &m) in s.mask.data().iter().enumerate() {
                let k = color_index(&s.image, i, bins);
                if m >= 0.5 {
                    hand[k] += 1;
                } else {
                    background[k] += 1;
                }
            }
        }
        let n_hand: u64 = hand.iter().sum();
        let n_bg: u64 = background.iter().sum();
        let smooth = |counts: &[u64], n: u64| -> Vec<f64> {
            counts.iter().map(|&c| (c + 1) as f64 / (n + cells as u64) as f64).collect()
        };
        Ok(ColorModel {
            bins,
            hand: smooth(&hand, n_hand),
            background: smooth(&background, n_bg),
            prior: n_hand as f64 / (n_hand + n_bg) as f64,
        })
    }

    /// Per-pixel posterior `P(hand | color)`.
    pub fn predict(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        if image.channels() != 3 {
            return Err(Error::invalid(format!("color model needs an RGB image, got {}", image.shape())));
        }
        let shape = Shape::new(1, image.height(), image.width())?;
        let data = (0..shape.plane())
            .map(|i| {
                let k = color_index(image, i, self.bins);
                let h = self.prior * self.hand[k];
                let b = (1.0 - self.prior) * self.background[k];
                (h / (h + b)) as f32
            })
            .collect();
        Tensor::from_vec(shape, data)
    }
}
