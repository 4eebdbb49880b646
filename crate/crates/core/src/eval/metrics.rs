//! Pixel accuracy, ROC curves, threshold sweeps and difference maps.
//!
//! Everything is pooled over all pixels of all images, and a pixel counts
//! as hand when `p >= threshold`.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn merge(&self, other: &ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    fn add(&mut self, p: f64, t: f64, threshold: f64) {
        match (p >= threshold, t >= 0.5) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

pub fn confusion<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<ConfusionCounts> {
    target.expect_shape("accuracy", pred.shape())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        c.add(p.as_f64(), t.as_f64(), threshold);
    }
    Ok(c)
}

/// `(tp + tn) / total` at `threshold`, with the underlying counts.
pub fn accuracy<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<(f64, ConfusionCounts)> {
    let c = confusion(pred, target, threshold)?;
    Ok((c.accuracy(), c))
}

/// Counts pooled over several images.
pub fn pooled_confusion<T: Real>(preds: &[Tensor<T>], targets: &[Tensor<T>], threshold: f64) -> Result<ConfusionCounts> {
    check_pairs(preds, targets)?;
    preds
        .iter()
        .zip(targets)
        .try_fold(ConfusionCounts::default(), |acc, (p, t)| Ok(acc.merge(&confusion(p, t, threshold)?)))
}

fn check_pairs<T: Real>(preds: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if preds.len() != targets.len() {
        return Err(Error::invalid(format!("{} predictions but {} targets", preds.len(), targets.len())));
    }
    for (p, t) in preds.iter().zip(targets) {
        t.expect_shape("evaluation", p.shape())?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
}

/// Threshold `i` of `n` evenly spaced values on `[0, 1]`.
pub fn threshold_at(i: usize, n: usize) -> f64 {
    if i + 1 == n {
        1.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Per-threshold confusion counts for `n` thresholds evenly spaced on
/// `[0, 1]`, in one pass over the pixels.
pub fn threshold_counts<T: Real>(preds: &[Tensor<T>], targets: &[Tensor<T>], n: usize) -> Result<Vec<ConfusionCounts>> {
    check_pairs(preds, targets)?;
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 thresholds, got {n}")));
    }
    // passes[k]: pixels whose probability reaches thresholds 0..=k but not
    // k + 1; index n holds pixels below threshold 0.
    let mut pos = vec![0u64; n + 1];
    let mut neg = vec![0u64; n + 1];
    let last = (n - 1) as f64;
    for (p, t) in preds.iter().zip(targets) {
        for (&pv, &tv) in p.data().iter().zip(t.data()) {
            let pv = pv.as_f64();
            let k = if pv < 0.0 {
                n
            } else {
                let mut k = ((pv * last).floor() as usize).min(n - 1);
                while k + 1 < n && pv >= threshold_at(k + 1, n) {
                    k += 1;
                }
                while k > 0 && pv < threshold_at(k, n) {
                    k -= 1;
                }
                k
            };
            if tv.as_f64() >= 0.5 {
                pos[k] += 1;
            } else {
                neg[k] += 1;
            }
        }
    }
    let total_pos: u64 = pos.iter().sum();
    let total_neg: u64 = neg.iter().sum();
    let mut out = vec![ConfusionCounts::default(); n];
    let (mut tp, mut fp) = (0u64, 0u64);
    for i in (0..n).rev() {
        tp += pos[i];
        fp += neg[i];
        out[i] = ConfusionCounts { tp, fp, tn: total_neg - fp, fn_: total_pos - tp };
    }
    Ok(out)
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// ROC over `n_thresholds` evenly spaced thresholds on `[0, 1]`, plus a
/// closing point at a threshold just above 1 where nothing is positive.
/// Rates with an empty denominator are reported as 0.
pub fn roc_curve<T: Real>(preds: &[Tensor<T>], targets: &[Tensor<T>], n_thresholds: usize) -> Result<Vec<RocPoint>> {
    let counts = threshold_counts(preds, targets, n_thresholds)?;
    let mut pts: Vec<RocPoint> = counts
        .iter()
        .enumerate()
        .map(|(i, c)| RocPoint {
            threshold: threshold_at(i, n_thresholds),
            true_positive_rate: rate(c.tp, c.tp + c.fn_),
            false_positive_rate: rate(c.fp, c.fp + c.tn),
        })
        .collect();
    pts.push(RocPoint { threshold: 1.0 + f64::EPSILON, true_positive_rate: 0.0, false_positive_rate: 0.0 });
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSweep {
    /// (threshold, accuracy)
    pub points: Vec<(f64, f64)>,
    pub best_threshold: f64,
    pub best_accuracy: f64,
    /// Contiguous threshold interval around the best threshold on which
    /// accuracy stays within `PLATEAU_TOLERANCE` of the best.
    pub plateau: (f64, f64),
}

/// Half a percentage point.
pub const PLATEAU_TOLERANCE: f64 = 0.005;

impl ThresholdSweep {
    pub fn plateau_width(&self) -> f64 {
        self.plateau.1 - self.plateau.0
    }
}

pub fn threshold_sweep<T: Real>(preds: &[Tensor<T>], targets: &[Tensor<T>], n_thresholds: usize) -> Result<ThresholdSweep> {
    let counts = threshold_counts(preds, targets, n_thresholds)?;
    let points: Vec<(f64, f64)> =
        counts.iter().enumerate().map(|(i, c)| (threshold_at(i, n_thresholds), c.accuracy())).collect();
    // first maximum wins ties
    let best = points.iter().enumerate().fold(0, |b, (i, p)| if p.1 > points[b].1 { i } else { b });
    let floor = points[best].1 - PLATEAU_TOLERANCE;
    let mut lo = best;
    while lo > 0 && points[lo - 1].1 >= floor {
        lo -= 1;
    }
    let mut hi = best;
    while hi + 1 < points.len() && points[hi + 1].1 >= floor {
        hi += 1;
    }
    Ok(ThresholdSweep {
        best_threshold: points[best].0,
        best_accuracy: points[best].1,
        plateau: (points[lo].0, points[hi].0),
        points,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffMap {
    /// 1 where the masks disagree.
    pub map: Tensor<f32>,
    pub mismatches: usize,
    /// Fraction of mismatches on the ground-truth boundary band: boundary
    /// pixels (an 8-neighbor carries the other label) and their 8-neighbors.
    /// 1.0 when there are no mismatches.
    pub boundary_fraction: f64,
}

pub fn diff_map<T: Real>(pred_mask: &Tensor<T>, target_mask: &Tensor<T>) -> Result<DiffMap> {
    target_mask.expect_shape("diff_map", pred_mask.shape())?;
    if target_mask.channels() != 1 {
        return Err(Error::invalid(format!("diff_map expects single-channel masks, got {}", target_mask.shape())));
    }
    let (h, w) = (target_mask.height(), target_mask.width());
    let label = |y: usize, x: usize| target_mask.get(0, y, x).as_f64() >= 0.5;
    let neighbors = |y: usize, x: usize| {
        let ys = y.saturating_sub(1)..=(y + 1).min(h - 1);
        ys.flat_map(move |ny| (x.saturating_sub(1)..=(x + 1).min(w - 1)).map(move |nx| (ny, nx)))
    };
    let boundary: Vec<bool> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            neighbors(y, x).any(|(ny, nx)| label(ny, nx) != label(y, x))
        })
        .collect();
    let map = Tensor::from_fn(pred_mask.shape(), |_, y, x| {
        if (pred_mask.get(0, y, x).as_f64() >= 0.5) != label(y, x) {
            1.0
        } else {
            0.0
        }
    });
    let mut mismatches = 0;
    let mut on_band = 0;
    for y in 0..h {
        for x in 0..w {
            if map.get(0, y, x) == 1.0 {
                mismatches += 1;
                if neighbors(y, x).any(|(ny, nx)| boundary[ny * w + nx]) {
                    on_band += 1;
                }
            }
        }
    }
    let boundary_fraction = if mismatches == 0 { 1.0 } else { on_band as f64 / mismatches as f64 };
    Ok(DiffMap { map, mismatches, boundary_fraction })
}

/// `p >= threshold` → 1, else 0.
pub fn binarize<T: Real>(pred: &Tensor<T>, threshold: f64) -> Tensor<T> {
    pred.map(|v| if v.as_f64() >= threshold { T::one() } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn t(h: usize, w: usize, v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, h, w).unwrap(), v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_and_inverted() {
        let target = t(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(accuracy(&target, &target, 0.5).unwrap().0, 1.0);
        let inv = target.map(|v| 1.0 - v);
        let (acc, c) = accuracy(&inv, &target, 0.5).unwrap();
        assert_eq!(acc, 0.0);
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 2, tn: 0, fn_: 2 });
    }

    #[test]
    fn ties_count_as_hand() {
        let (_, c) = accuracy(&t(1, 1, &[0.5]), &t(1, 1, &[1.0]), 0.5).unwrap();
        assert_eq!(c.tp, 1);
    }

    #[test]
    fn histogram_counts_match_direct_comparison() {
        let preds = vec![t(1, 6, &[0.0, 0.1, 0.3, 0.30000001, 0.7, 1.0])];
        let targets = vec![t(1, 6, &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0])];
        for n in [2, 3, 11, 256] {
            let counts = threshold_counts(&preds, &targets, n).unwrap();
            for (i, c) in counts.iter().enumerate() {
                let direct = pooled_confusion(&preds, &targets, threshold_at(i, n)).unwrap();
                assert_eq!(*c, direct, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn roc_endpoints() {
        let preds = vec![t(1, 4, &[0.2, 0.9, 0.4, 0.6])];
        let targets = vec![t(1, 4, &[0.0, 1.0, 1.0, 0.0])];
        let roc = roc_curve(&preds, &targets, 256).unwrap();
        assert_eq!(roc.len(), 257);
        assert_eq!((roc[0].true_positive_rate, roc[0].false_positive_rate), (1.0, 1.0));
        let end = roc.last().unwrap();
        assert!(end.threshold > 1.0);
        assert_eq!((end.true_positive_rate, end.false_positive_rate), (0.0, 0.0));
    }

    #[test]
    fn binary_predictor_sweep_is_flat() {
        let target = t(1, 4, &[1.0, 0.0, 1.0, 0.0]);
        let pred = t(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let sweep = threshold_sweep(&[pred], &[target], 11).unwrap();
        for &(th, acc) in &sweep.points[1..] {
            assert_eq!(acc, 0.75, "threshold {th}");
        }
        assert_eq!(sweep.plateau, (0.1, 1.0));
    }

    #[test]
    fn diff_map_examples() {
        let a = Tensor::from_fn(Shape::new(1, 7, 7).unwrap(), |_, y, x| {
            if (1..6).contains(&y) && (1..6).contains(&x) {
                1.0f32
            } else {
                0.0
            }
        });
        let same = diff_map(&a, &a).unwrap();
        assert_eq!(same.mismatches, 0);
        assert_eq!(same.boundary_fraction, 1.0);

        let mut b = a.clone();
        b.set(0, 3, 3, 0.0);
        let d = diff_map(&b, &a).unwrap();
        assert_eq!(d.mismatches, 1);
        assert_eq!(d.map.sum(), 1.0);
        // the center of a 5×5 square is two pixels from the edge
        assert_eq!(d.boundary_fraction, 0.0);

        let mut c = a.clone();
        c.set(0, 0, 0, 1.0);
        assert_eq!(diff_map(&c, &a).unwrap().boundary_fraction, 1.0);
    }
}
