//! Loss, optimizer, augmentation and the two-phase training procedure.

pub mod augment;
pub mod loss;
pub mod rmsprop;
pub mod trainer;

pub use augment::{alignment_iou, sample_affine, warp_sample, Affine, AugmentConfig};
pub use loss::{boosted_ce, pixel_loss, BoostedCEConfig};
pub use rmsprop::{RMSPropConfig, RMSPropState};
pub use trainer::{
    augmented_sample, cascade_scores, epoch_order, refine_loss_and_grads, stage1_loss_and_grads, stage1_scores,
    train_cascade, train_refiner, train_stage1, train_stage2, EpochRecord, LogRow, SampleGrads, Stage, TrainConfig,
    TrainingLog, LOG_HEADER,
};
