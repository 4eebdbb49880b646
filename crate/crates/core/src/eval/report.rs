//! CSV and gnuplot-style text outputs.

use super::metrics::{threshold_at, ConfusionCounts, RocPoint, ThresholdSweep};

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `threshold,tpr,fpr,accuracy` for each threshold of `threshold_counts`,
/// closed by a row just above 1 where nothing is classified as hand.
pub fn metrics_csv(counts: &[ConfusionCounts]) -> String {
    let mut s = String::from("threshold,tpr,fpr,accuracy\n");
    let n = counts.len();
    let mut row = |t: f64, c: &ConfusionCounts| {
        s.push_str(&format!("{t},{},{},{}\n", rate(c.tp, c.tp + c.fn_), rate(c.fp, c.fp + c.tn), c.accuracy()));
    };
    for (i, c) in counts.iter().enumerate() {
        row(threshold_at(i, n), c);
    }
    if let Some(c) = counts.first() {
        let none = ConfusionCounts { tp: 0, fp: 0, tn: c.fp + c.tn, fn_: c.tp + c.fn_ };
        row(1.0 + f64::EPSILON, &none);
    }
    s
}

/// Two columns: false-positive rate, true-positive rate.
pub fn roc_gnuplot(roc: &[RocPoint]) -> String {
    let mut s = String::from("# fpr tpr\n");
    for p in roc {
        s.push_str(&format!("{} {}\n", p.false_positive_rate, p.true_positive_rate));
    }
    s
}

/// Two columns: threshold, accuracy.
pub fn sweep_gnuplot(sweep: &ThresholdSweep) -> String {
    let mut s = format!(
        "# threshold accuracy (best {} at {}, plateau {}..{})\n",
        sweep.best_accuracy, sweep.best_threshold, sweep.plateau.0, sweep.plateau.1
    );
    for (t, a) in &sweep.points {
        s.push_str(&format!("{t} {a}\n"));
    }
    s
}
