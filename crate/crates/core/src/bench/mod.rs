//! Inference timing and the ablation suite: cascade, full-resolution
//! monolith, coarse-only refinement and the color baseline, trained and
//! measured on the same data with the same seed.

use std::time::Instant;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::{confusion, ColorModel, ConfusionCounts, THRESHOLD};
use crate::network::{build_fullres_variant, build_no_image_variant, ArchConfig, CascadeModel, MultiScaleNet, RefineNet};
use crate::tensor::Tensor;
use crate::training::{train_refiner, train_stage1, train_stage2, TrainConfig};

/// Runs excluded from timing.
pub const WARMUP_RUNS: usize = 3;
pub const MIN_REPETITIONS: usize = 20;

/// Anything that maps an RGB image to a hand-probability map of the same
/// resolution.
pub trait Segmenter {
    fn segment(&self, image: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Segmenter for CascadeModel<f32> {
    fn segment(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.forward(image)?.1)
    }
}

impl Segmenter for ColorModel {
    fn segment(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.predict(image)
    }
}

/// A refinement network on its own, or fed by a frozen stage 1.
pub struct RefineVariant {
    pub net: RefineNet<f32>,
    pub part1: Option<MultiScaleNet<f32>>,
}

impl Segmenter for RefineVariant {
    fn segment(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        match (&self.part1, self.net.input.uses_coarse()) {
            (Some(p1), true) => self.net.forward(image, Some(&p1.forward(image)?)),
            (None, true) => Err(Error::invalid("variant needs a stage-1 network for its coarse input")),
            (_, false) => self.net.forward(image, None),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub variant: String,
    pub accuracy: f64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// (height, width)
    pub resolution: (usize, usize),
    pub repetitions: usize,
    pub seed: u64,
}

pub const BENCH_HEADER: &str = "variant,accuracy,mean_ms,median_ms,p95_ms,resolution,seed";

impl BenchResult {
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{}x{},{}",
            self.variant,
            self.accuracy,
            self.mean_ms,
            self.median_ms,
            self.p95_ms,
            self.resolution.1,
            self.resolution.0,
            self.seed
        )
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Times `reps` single-image inferences cycling through `test`, after
/// `WARMUP_RUNS` untimed ones. Accuracy is pooled over the outputs of the
/// first pass through `test` (images not reached by the timed runs are
/// evaluated afterwards, untimed).
pub fn bench_inference(
    variant: &str,
    segmenter: &dyn Segmenter,
    test: &[Sample],
    reps: usize,
    seed: u64,
) -> Result<BenchResult> {
    if test.is_empty() {
        return Err(Error::Empty("benchmark test set"));
    }
    if reps < MIN_REPETITIONS {
        return Err(Error::Config(format!("need at least {MIN_REPETITIONS} repetitions, got {reps}")));
    }
    let resolution = (test[0].height(), test[0].width());
    if let Some(s) = test.iter().find(|s| (s.height(), s.width()) != resolution) {
        return Err(Error::invalid(format!("mixed resolutions in benchmark set ({})", s.id)));
    }
    for i in 0..WARMUP_RUNS {
        segmenter.segment(&test[i % test.len()].image)?;
    }
    let mut times = Vec::with_capacity(reps);
    let mut counts = ConfusionCounts::default();
    for i in 0..reps {
        let s = &test[i % test.len()];
        let start = Instant::now();
        let p = segmenter.segment(&s.image)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        if i < test.len() {
            counts = counts.merge(&confusion(&p, &s.mask, THRESHOLD)?);
        }
    }
    for s in test.iter().skip(reps) {
        counts = counts.merge(&confusion(&segmenter.segment(&s.image)?, &s.mask, THRESHOLD)?);
    }
    let mean_ms = times.iter().sum::<f64>() / reps as f64;
    times.sort_by(f64::total_cmp);
    Ok(BenchResult {
        variant: variant.to_string(),
        accuracy: counts.accuracy(),
        mean_ms,
        median_ms: median(&times),
        p95_ms: percentile(&times, 0.95),
        resolution,
        repetitions: reps,
        seed,
    })
}

pub const CASCADE: &str = "cascade";
pub const FULLRES: &str = "fullres-monolith";
pub const NO_IMAGE: &str = "no-image";
pub const COLOR: &str = "color-baseline";

/// Minimum accuracy margin of the cascade over the color baseline.
pub const COLOR_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub arch: ArchConfig,
    pub stage1: TrainConfig,
    /// Also used for the monolith and the no-image variant.
    pub stage2: TrainConfig,
    pub color_bins: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    /// cascade, fullres-monolith, no-image, color-baseline.
    pub rows: Vec<BenchResult>,
    /// (description, passed)
    pub checks: Vec<(String, bool)>,
    pub cascade: CascadeModel<f32>,
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&BenchResult> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Cascade median time over monolith median time.
    pub fn time_ratio(&self) -> Option<f64> {
        Some(self.row(CASCADE)?.median_ms / self.row(FULLRES)?.median_ms)
    }

    /// The benchmark table with a trailing `check` column: the outcome of
    /// the ordering claim each non-reference row takes part in.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{BENCH_HEADER},check\n");
        for (row, check) in self.rows.iter().zip(row_checks(&self.checks)) {
            s.push_str(&format!("{},{check}\n", row.csv_fields()));
        }
        s
    }
}

fn row_checks(checks: &[(String, bool)]) -> Vec<&'static str> {
    let word = |ok: bool| if ok { "pass" } else { "fail" };
    let all = |prefix: &str| checks.iter().filter(|(d, _)| d.starts_with(prefix)).all(|(_, ok)| *ok);
    vec!["reference", word(all("fullres")), word(all("no-image")), word(all("color"))]
}

/// Orderings the ablation is expected to show.
pub fn ablation_checks(rows: &[BenchResult]) -> Vec<(String, bool)> {
    let acc = |v: &str| rows.iter().find(|r| r.variant == v).map_or(f64::NAN, |r| r.accuracy);
    let (c, f, n, b) = (acc(CASCADE), acc(FULLRES), acc(NO_IMAGE), acc(COLOR));
    vec![
        (format!("fullres-monolith accuracy {f:.4} < cascade {c:.4}"), f < c),
        (format!("no-image accuracy {n:.4} <= cascade {c:.4}"), n <= c),
        (format!("color-baseline accuracy {b:.4} <= no-image {n:.4}"), b <= n),
        (format!("color-baseline accuracy {b:.4} at least {COLOR_MARGIN} below cascade {c:.4}"), c - b >= COLOR_MARGIN),
    ]
}

/// Trains every variant from `cfg.seed` on `train` and benchmarks it on
/// `test`. Stage 1 is trained once and shared by the cascade and the
/// no-image variant, so the two differ only in their second stage.
pub fn run_ablation_suite(
    train: &[Sample],
    test: &[Sample],
    cfg: &AblationConfig,
    mut progress: impl FnMut(&str),
) -> Result<AblationReport> {
    let stage1 = TrainConfig { seed: cfg.seed, ..cfg.stage1 };
    let stage2 = TrainConfig { seed: cfg.seed, ..cfg.stage2 };

    progress("training stage 1");
    let mut cascade = CascadeModel::init(cfg.seed, &cfg.arch)?;
    train_stage1(&mut cascade.part1, train, &stage1)?;
    progress("training cascade stage 2");
    train_stage2(&mut cascade, train, &stage2)?;

    progress("training full-resolution monolith");
    let mut fullres = RefineVariant { net: build_fullres_variant(cfg.seed)?, part1: None };
    train_refiner(&mut fullres.net, None, train, &stage2)?;

    progress("training no-image variant");
    let mut no_image = RefineVariant { net: build_no_image_variant(cfg.seed)?, part1: Some(cascade.part1.clone()) };
    train_refiner(&mut no_image.net, no_image.part1.as_ref(), train, &stage2)?;

    progress("fitting color baseline");
    let color = ColorModel::fit(train, cfg.color_bins)?;

    let mut rows = Vec::with_capacity(4);
    for (name, seg) in [
        (CASCADE, &cascade as &dyn Segmenter),
        (FULLRES, &fullres as &dyn Segmenter),
        (NO_IMAGE, &no_image as &dyn Segmenter),
        (COLOR, &color as &dyn Segmenter),
    ] {
        progress(&format!("benchmarking {name}"));
        rows.push(bench_inference(name, seg, test, cfg.reps, cfg.seed)?);
    }
    let checks = ablation_checks(&rows);
    Ok(AblationReport { rows, checks, cascade })
}
