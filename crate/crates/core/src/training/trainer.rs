//! Two-phase training: stage 1 on its own, then stage 2 with stage 1
//! frozen. Also trains the stand-alone refinement variants used in
//! ablations.

use std::fmt;

use rand::seq::SliceRandom;

use crate::data::{stream_rng, Sample, Split};
use crate::error::{Error, Result};
use crate::eval::{confusion, ConfusionCounts, THRESHOLD};
use crate::network::{coarse_target, CascadeModel, MultiScaleNet, RefineNet};
use crate::tensor::{Real, Tensor};

use super::augment::{sample_affine, warp_sample, AugmentConfig};
use super::loss::{boosted_ce, BoostedCEConfig};
use super::rmsprop::{RMSPropConfig, RMSPropState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: BoostedCEConfig,
    pub optimizer: RMSPropConfig,
    pub augment: AugmentConfig,
    pub stage: Stage,
}

impl TrainConfig {
    pub fn new(stage: Stage) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            seed: 0,
            loss: BoostedCEConfig::default(),
            optimizer: RMSPropConfig::default(),
            augment: AugmentConfig::default(),
            stage,
        }
    }

    /// The recipe that reaches the desk-scale accuracy targets on the
    /// synthetic 180-image training split: single-sample updates, with a
    /// longer stage 1 and a faster stage-2 learning rate.
    pub fn desk(stage: Stage) -> Self {
        let mut cfg = TrainConfig { batch_size: 1, ..TrainConfig::new(stage) };
        match stage {
            Stage::One => cfg.epochs = 100,
            Stage::Two => {
                cfg.epochs = 120;
                cfg.optimizer.learning_rate = 3e-3;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()
    }

    fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Config(format!("stage {stage} training got a stage {} config", self.stage)));
        }
        Ok(())
    }
}

/// Training-set statistics of one epoch, measured on the augmented samples
/// before each batch's update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss, parameter gradients and confusion counts for one sample.
pub type SampleGrads<T> = (f64, Vec<Vec<T>>, ConfusionCounts);

/// Stage 1 against the area-downsampled, thresholded mask.
pub fn stage1_loss_and_grads<T: Real>(
    net: &MultiScaleNet<T>,
    image: &Tensor<T>,
    mask: &Tensor<T>,
    loss: &BoostedCEConfig,
) -> Result<SampleGrads<T>> {
    let cache = net.forward_train(image)?;
    let p = &cache.probabilities;
    let target = coarse_target(mask, p.height(), p.width())?;
    let (value, grad) = boosted_ce(p, &target, loss)?;
    let counts = confusion(p, &target, THRESHOLD)?;
    Ok((value, net.backward(&cache, &grad)?, counts))
}

/// A refinement network against the full-resolution mask; `coarse` is the
/// stage-1 map when the network consumes one.
pub fn refine_loss_and_grads<T: Real>(
    net: &RefineNet<T>,
    image: &Tensor<T>,
    coarse: Option<&Tensor<T>>,
    mask: &Tensor<T>,
    loss: &BoostedCEConfig,
) -> Result<SampleGrads<T>> {
    let cache = net.forward_train(image, coarse)?;
    let (value, grad) = boosted_ce(&cache.probabilities, mask, loss)?;
    let counts = confusion(&cache.probabilities, mask, THRESHOLD)?;
    Ok((value, net.backward(&cache, &grad)?, counts))
}

trait Job {
    fn stage(&self) -> Stage;
    fn params(&self) -> Vec<&[f32]>;
    fn params_mut(&mut self) -> Vec<&mut [f32]>;
    fn sample_grads(&self, sample: &Sample, loss: &BoostedCEConfig) -> Result<SampleGrads<f32>>;
}

struct Stage1Job<'a>(&'a mut MultiScaleNet<f32>);

impl Job for Stage1Job<'_> {
    fn stage(&self) -> Stage {
        Stage::One
    }
    fn params(&self) -> Vec<&[f32]> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut [f32]> {
        self.0.params_mut()
    }
    fn sample_grads(&self, s: &Sample, loss: &BoostedCEConfig) -> Result<SampleGrads<f32>> {
        stage1_loss_and_grads(self.0, &s.image, &s.mask, loss)
    }
}

struct RefineJob<'a> {
    net: &'a mut RefineNet<f32>,
    part1: Option<&'a MultiScaleNet<f32>>,
}

impl Job for RefineJob<'_> {
    fn stage(&self) -> Stage {
        Stage::Two
    }
    fn params(&self) -> Vec<&[f32]> {
        self.net.params()
    }
    fn params_mut(&mut self) -> Vec<&mut [f32]> {
        self.net.params_mut()
    }
    fn sample_grads(&self, s: &Sample, loss: &BoostedCEConfig) -> Result<SampleGrads<f32>> {
        let coarse = match self.part1 {
            Some(p1) => Some(p1.forward(&s.image)?),
            None => None,
        };
        refine_loss_and_grads(self.net, &s.image, coarse.as_ref(), &s.mask, loss)
    }
}

const AUGMENT_SALT: u64 = 0x6175_676d_656e_7400;

/// Augmented copy of `data[index]` for `epoch`. Each (stage, epoch, index)
/// triple has its own random stream.
pub fn augmented_sample(cfg: &TrainConfig, epoch: usize, index: usize, sample: &Sample) -> Result<Sample> {
    if cfg.augment == AugmentConfig::none() {
        return Ok(sample.clone());
    }
    let seed = cfg.seed ^ AUGMENT_SALT ^ cfg.stage.number() as u64;
    let mut rng = stream_rng(seed, ((epoch as u64) << 32) | index as u64);
    let m = sample_affine(&mut rng, &cfg.augment, sample.width(), sample.height());
    warp_sample(sample, &m)
}

/// Visiting order for `epoch`: a seeded shuffle of `0..n`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, epoch as u64));
    order
}

fn run(job: &mut impl Job, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    cfg.expect_stage(job.stage())?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let stage = job.stage().number();
    let mut optimizer = RMSPropState::new(cfg.optimizer, &job.params())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let diverged = |loss: f64| Error::Diverged { stage, epoch: epoch + 1, loss };
        let (mut loss_sum, mut counts) = (0.0, ConfusionCounts::default());
        for batch in epoch_order(cfg.seed, epoch, data.len()).chunks(cfg.batch_size) {
            let mut sum: Vec<Vec<f32>> = Vec::new();
            for &i in batch {
                let sample = augmented_sample(cfg, epoch, i, &data[i])?;
                let (loss, grads, c) = job.sample_grads(&sample, &cfg.loss)?;
                if !loss.is_finite() {
                    return Err(diverged(loss));
                }
                loss_sum += loss;
                counts = counts.merge(&c);
                if sum.is_empty() {
                    sum = grads;
                } else {
                    for (acc, g) in sum.iter_mut().zip(&grads) {
                        for (a, v) in acc.iter_mut().zip(g) {
                            *a += v;
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f32;
            for v in sum.iter_mut().flatten() {
                *v *= scale;
            }
            optimizer.step(&mut job.params_mut(), &sum)?;
            if !job.params().iter().all(|p| p.iter().all(|v| v.is_finite())) {
                return Err(diverged(f64::NAN));
            }
        }
        history.push(EpochRecord { epoch: epoch + 1, loss: loss_sum / data.len() as f64, accuracy: counts.accuracy() });
    }
    Ok(history)
}

pub fn train_stage1(net: &mut MultiScaleNet<f32>, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    run(&mut Stage1Job(net), data, cfg)
}

/// Trains `cascade.part2` with `cascade.part1` frozen.
pub fn train_stage2(cascade: &mut CascadeModel<f32>, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    run(&mut RefineJob { net: &mut cascade.part2, part1: Some(&cascade.part1) }, data, cfg)
}

/// Trains a stand-alone refinement network. `part1` (frozen) supplies the
/// coarse map when the network's input needs one.
pub fn train_refiner(
    net: &mut RefineNet<f32>,
    part1: Option<&MultiScaleNet<f32>>,
    data: &[Sample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    if net.input.uses_coarse() && part1.is_none() {
        return Err(Error::invalid(format!("{:?} refinement needs a stage-1 network", net.input)));
    }
    let part1 = if net.input.uses_coarse() { part1 } else { None };
    run(&mut RefineJob { net, part1 }, data, cfg)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub stage: Stage,
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "stage,epoch,split,loss,accuracy";

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{LOG_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.stage, r.epoch, r.split, r.loss, r.accuracy));
        }
        s
    }

    /// Last test-split row of `stage`.
    pub fn final_test(&self, stage: Stage) -> Option<&LogRow> {
        self.rows.iter().rev().find(|r| r.stage == stage && r.split == Split::Test)
    }
}

/// Mean loss and pooled accuracy of stage 1 on `data`.
pub fn stage1_scores(net: &MultiScaleNet<f32>, data: &[Sample], loss: &BoostedCEConfig) -> Result<(f64, f64)> {
    let (mut total, mut counts) = (0.0, ConfusionCounts::default());
    for s in data {
        let p = net.forward(&s.image)?;
        let target = coarse_target(&s.mask, p.height(), p.width())?;
        total += boosted_ce(&p, &target, loss)?.0;
        counts = counts.merge(&confusion(&p, &target, THRESHOLD)?);
    }
    Ok((total / data.len() as f64, counts.accuracy()))
}

/// Mean loss and pooled accuracy of the full cascade on `data`.
pub fn cascade_scores(model: &CascadeModel<f32>, data: &[Sample], loss: &BoostedCEConfig) -> Result<(f64, f64)> {
    let (mut total, mut counts) = (0.0, ConfusionCounts::default());
    for s in data {
        let (_, fine) = model.forward(&s.image)?;
        total += boosted_ce(&fine, &s.mask, loss)?.0;
        counts = counts.merge(&confusion(&fine, &s.mask, THRESHOLD)?);
    }
    Ok((total / data.len() as f64, counts.accuracy()))
}

/// Stage 1, then stage 2 with stage 1 frozen. The log holds one train row
/// per epoch and stage, and one test row after each stage when `test` is
/// nonempty. `progress` sees every row as it is produced.
pub fn train_cascade(
    model: &mut CascadeModel<f32>,
    train: &[Sample],
    test: &[Sample],
    stage1: &TrainConfig,
    stage2: &TrainConfig,
    mut progress: impl FnMut(&LogRow),
) -> Result<TrainingLog> {
    stage1.expect_stage(Stage::One)?;
    stage2.expect_stage(Stage::Two)?;
    let mut log = TrainingLog::default();
    let mut push = |log: &mut TrainingLog, row: LogRow| {
        progress(&row);
        log.rows.push(row);
    };
    let to_row = |stage, r: &EpochRecord| LogRow { stage, epoch: r.epoch, split: Split::Train, loss: r.loss, accuracy: r.accuracy };

    for r in train_stage1(&mut model.part1, train, stage1)? {
        push(&mut log, to_row(Stage::One, &r));
    }
    if !test.is_empty() {
        let (loss, accuracy) = stage1_scores(&model.part1, test, &stage1.loss)?;
        push(&mut log, LogRow { stage: Stage::One, epoch: stage1.epochs, split: Split::Test, loss, accuracy });
    }
    for r in train_stage2(model, train, stage2)? {
        push(&mut log, to_row(Stage::Two, &r));
    }
    if !test.is_empty() {
        let (loss, accuracy) = cascade_scores(model, test, &stage2.loss)?;
        push(&mut log, LogRow { stage: Stage::Two, epoch: stage2.epochs, split: Split::Test, loss, accuracy });
    }
    Ok(log)
}
