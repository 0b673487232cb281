use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the look-ahead window.
pub const MAX_LOOKAHEAD: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaOptimizerKind {
    /// SGD with `meta_momentum`.
    #[default]
    SgdMomentum,
    /// Per-coordinate adaptive steps (Adam moments).
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Main steps per meta update.
    pub k: usize,
    pub main_lr: f64,
    pub meta_lr: f64,
    pub main_momentum: f64,
    pub meta_momentum: f64,
    pub meta_optimizer: MetaOptimizerKind,
    pub batch_size_noisy: usize,
    pub batch_size_clean: usize,
    pub epochs: usize,
    pub seed: u64,
    /// HVP finite-difference step is `fd_epsilon_scale / ‖v‖₂`.
    pub fd_epsilon_scale: f64,
    /// Multiply both learning rates by 0.1 at 60% and again at 80% of the
    /// epochs.
    pub lr_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            main_lr: 0.1,
            meta_lr: 1e-4,
            main_momentum: 0.9,
            meta_momentum: 0.9,
            meta_optimizer: MetaOptimizerKind::SgdMomentum,
            batch_size_noisy: 50,
            batch_size_clean: 50,
            epochs: 10,
            seed: 0,
            fd_epsilon_scale: 0.01,
            lr_decay: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 || self.k > MAX_LOOKAHEAD {
            return bad(format!("k = {} outside 1..={MAX_LOOKAHEAD}", self.k));
        }
        if !(self.main_lr >= 0.0 && self.main_lr.is_finite()) {
            return bad(format!("main_lr = {}", self.main_lr));
        }
        if !(self.meta_lr >= 0.0 && self.meta_lr.is_finite()) {
            return bad(format!("meta_lr = {}", self.meta_lr));
        }
        for (name, m) in [
            ("main_momentum", self.main_momentum),
            ("meta_momentum", self.meta_momentum),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} = {m} outside [0, 1)"));
            }
        }
        if self.batch_size_noisy == 0 || self.batch_size_clean == 0 || self.epochs == 0 {
            return bad("batch sizes and epochs must be >= 1".into());
        }
        if self.fd_epsilon_scale.is_nan() || self.fd_epsilon_scale <= 0.0 {
            return bad(format!("fd_epsilon_scale = {}", self.fd_epsilon_scale));
        }
        Ok(())
    }

    /// Learning-rate multiplier for a 0-based epoch.
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        if !self.lr_decay {
            return 1.0;
        }
        let first = (self.epochs as f64 * 0.6).round() as usize;
        let second = (self.epochs as f64 * 0.8).round() as usize;
        if epoch >= second {
            0.01
        } else if epoch >= first {
            0.1
        } else {
            1.0
        }
    }
}
