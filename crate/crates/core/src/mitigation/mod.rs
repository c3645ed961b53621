//! Mitigation strategies against JPEG degradation.
//!
//! - none: evaluate the task model on decoded JPEGs as-is;
//! - supervised fine-tuning: retrain the task model on JPEG-augmented,
//!   labelled data ([`supervised_finetune`]);
//! - off-the-shelf artifact correction: an image-to-image corrector trained
//!   only on pixel reconstruction ([`pretrain_ac`]);
//! - task-targeted artifact correction: the corrector fine-tuned so the
//!   frozen task model reacts to corrected JPEGs as it does to the
//!   originals ([`ttac_train`], [`multihead_ttac`]). No labels are used.

mod augment;
mod protocol;
mod strategy;
mod train;
mod ttac;

pub use augment::{augment_jpeg, draw_qualities};
pub use protocol::{TrainLog, TrainProtocol};
pub use strategy::{apply, apply_batch, MitigationKind, MitigationStrategy, Quality, TtacTarget};
pub use train::{ac_loss_grads, pretrain_ac, pretrain_task, supervised_finetune, task_loss_grads};
pub use ttac::{
    default_target, multihead_round, multihead_ttac, ttac_loss, ttac_loss_grads, ttac_train, TtacTask,
};
