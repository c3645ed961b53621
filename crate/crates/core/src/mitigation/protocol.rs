use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Optimization settings shared by every mitigation that trains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProtocol {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Inclusive JPEG quality range used for augmentation.
    pub quality_range: (u8, u8),
    pub seed: u64,
}

impl Default for TrainProtocol {
    /// 200 epochs, cosine 1e-3 → 1e-6, momentum 0.9, weight decay 5e-4,
    /// batch 16, quality in [10, 90].
    fn default() -> Self {
        Self {
            epochs: 200,
            lr_start: 1e-3,
            lr_end: 1e-6,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 16,
            quality_range: (10, 90),
            seed: 42,
        }
    }
}

impl TrainProtocol {
    /// Same schedule shape, 30 epochs.
    pub fn desk() -> Self {
        Self { epochs: 30, ..Self::default() }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_lr(mut self, start: f64, end: f64) -> Self {
        self.lr_start = start;
        self.lr_end = end;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `epochs == 0` is accepted and makes every trainer a no-op.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.quality_range;
        ensure!(1 <= lo && lo <= hi && hi <= 100, "quality range [{lo}, {hi}] not within [1, 100]");
        ensure!(self.batch_size >= 1, "batch size must be >= 1");
        ensure!(
            self.lr_start.is_finite() && self.lr_end.is_finite() && self.lr_start >= 0.0 && self.lr_end >= 0.0,
            "learning rates must be finite and non-negative"
        );
        ensure!((0.0..1.0).contains(&self.momentum), "momentum must be in [0, 1)");
        ensure!(self.weight_decay >= 0.0, "weight decay must be non-negative");
        Ok(())
    }
}

/// Per-epoch mean training loss; multihead runs also keep one series per
/// task.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub task_loss: Vec<Vec<f64>>,
}
