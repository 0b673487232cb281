use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::meta::{accumulate_meta_grad, meta_step, LrDiag, MetaGradState, MetaOptimizer};
use super::step::{
    main_step, meta_loss_grad, mixed_hvp_fd, split_clean_batch, Corrector, TrainBatch,
};
use crate::data::{batch_iter, CyclicBatches, Dataset, TrainingView};
use crate::diffcore::{Graph, ParamVector, Tensor};
use crate::error::{Error, Result};
use crate::models::{
    classifier_forward, cross_entropy_labels, predict, ClassifierConfig, LcnConfig,
};

/// A training loss above this counts as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Cross-entropy of the noisy rows against their (corrected) targets.
    pub noisy_loss: Option<f64>,
    /// Meta loss on the clean evaluation half after the step.
    pub clean_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-step noisy losses in the epoch.
    pub noisy_loss: Option<f64>,
    /// Cross-entropy on the whole clean set at the end of the epoch.
    pub clean_loss: f64,
    pub test_accuracy: Option<f64>,
    pub main_lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub meta_updates: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub w: ParamVector,
    /// Correction network weights; `None` for baselines.
    pub alpha: Option<ParamVector>,
    pub history: History,
}

/// Targets for the noisy rows during MLC training.
#[derive(Clone, Copy, Debug)]
pub enum LabelSource<'a> {
    /// Learned correction network, updated by meta steps.
    Lcn(&'a LcnConfig),
    /// The correction network replaced by one-hot of the observed label;
    /// no meta updates happen.
    FrozenIdentity,
}

/// Data fed to the label-correction-free trainers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feed {
    NoisyOnly,
    CleanOnly,
    CleanPlusNoisy,
}

/// Seeds for the independent random streams of one run.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const TAG_CLASSIFIER: u64 = 1;
const TAG_LCN: u64 = 2;
const TAG_NOISY_BATCHES: u64 = 3;
const TAG_CLEAN_BATCHES: u64 = 4;

/// Initial classifier weights for a run seed.
pub fn initial_classifier(cls: &ClassifierConfig, seed: u64) -> Result<ParamVector> {
    cls.init(sub_seed(seed, TAG_CLASSIFIER))
}

/// Initial correction-network weights for a run seed.
pub fn initial_lcn(lcn: &LcnConfig, seed: u64) -> Result<ParamVector> {
    lcn.init(sub_seed(seed, TAG_LCN))
}

/// Noisy-set minibatches of one epoch, in the order training visits them.
pub fn noisy_batches(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    batch_iter(
        n,
        cfg.batch_size_noisy,
        sub_seed(cfg.seed, TAG_NOISY_BATCHES),
        epoch as u64,
    )
}

/// The clean-set minibatch stream of a run.
pub fn clean_batches(n: usize, cfg: &TrainConfig) -> CyclicBatches {
    CyclicBatches::new(n, sub_seed(cfg.seed, TAG_CLEAN_BATCHES))
}

fn rows(data: &Dataset, idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let x = data.features.select_rows(idx)?;
    let y = idx.iter().map(|&i| data.labels[i]).collect();
    Ok((x, y))
}

fn empty_rows(dim: usize) -> Tensor {
    Tensor::zeros(&[0, dim])
}

fn dataset_loss(cls: &ClassifierConfig, w: &ParamVector, data: &Dataset) -> Result<f64> {
    let mut g = Graph::new();
    let wh = g.bind(w);
    let x = g.input(data.features.clone());
    let out = classifier_forward(&mut g, cls, x, &wh)?;
    let loss = cross_entropy_labels(&mut g, &data.labels, out.logits)?;
    Ok(g.value(loss).item())
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(cls: &ClassifierConfig, w: &ParamVector, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch("evaluation set"));
    }
    let pred = predict(cls, w, &data.features)?;
    let hits = pred
        .iter()
        .zip(&data.labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

struct Recorder<'a> {
    history: History,
    cls: &'a ClassifierConfig,
    clean: &'a Dataset,
    test: Option<&'a Dataset>,
    epoch_noisy: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn step(
        &mut self,
        epoch: usize,
        loss: f64,
        noisy_loss: Option<f64>,
        clean_loss: Option<f64>,
    ) -> Result<()> {
        let step = self.history.steps.len();
        self.history.steps.push(StepRecord {
            step,
            epoch,
            loss,
            noisy_loss,
            clean_loss,
        });
        if let Some(l) = noisy_loss {
            self.epoch_noisy.push(l);
        }
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(self.diverged(loss));
        }
        Ok(())
    }

    fn diverged(&self, loss: f64) -> Error {
        Error::Diverged {
            step: self.history.steps.len(),
            loss,
            history: Box::new(self.history.clone()),
        }
    }

    /// Converts a non-finite main step into a divergence carrying history.
    fn check<T>(&self, r: Result<T>) -> Result<T> {
        match r {
            Err(Error::NonFinite(msg)) => {
                debug!("non-finite training state: {msg}");
                Err(self.diverged(f64::NAN))
            }
            other => other,
        }
    }

    fn end_epoch(&mut self, epoch: usize, w: &ParamVector, main_lr: f64) -> Result<()> {
        let noisy_loss = if self.epoch_noisy.is_empty() {
            None
        } else {
            Some(self.epoch_noisy.iter().sum::<f64>() / self.epoch_noisy.len() as f64)
        };
        self.epoch_noisy.clear();
        let clean_loss = dataset_loss(self.cls, w, self.clean)?;
        let test_accuracy = self.test.map(|t| accuracy(self.cls, w, t)).transpose()?;
        info!(
            "epoch {epoch}: noisy_loss {noisy_loss:?} clean_loss {clean_loss:.5} test_acc {test_accuracy:?}"
        );
        self.history.epochs.push(EpochRecord {
            epoch,
            noisy_loss,
            clean_loss,
            test_accuracy,
            main_lr,
        });
        Ok(())
    }
}

fn check_sizes(view: &TrainingView<'_>, cls: &ClassifierConfig, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    cls.validate()?;
    for (name, d) in [("clean", view.clean), ("noisy", view.noisy)] {
        if d.num_classes != cls.num_classes || (!d.is_empty() && d.dim() != cls.input_dim) {
            return Err(Error::InvalidConfig(format!(
                "{name} set ({} features, {} classes) does not fit classifier ({} inputs, {} classes)",
                d.dim(),
                d.num_classes,
                cls.input_dim,
                cls.num_classes
            )));
        }
    }
    Ok(())
}

/// Meta label correction: alternates k main steps on corrected labels with
/// one update of the correction network against the clean loss.
pub fn train_mlc(
    view: TrainingView<'_>,
    test: Option<&Dataset>,
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_mlc_with(view, test, cls, LabelSource::Lcn(lcn), cfg)
}

pub fn train_mlc_with(
    view: TrainingView<'_>,
    test: Option<&Dataset>,
    cls: &ClassifierConfig,
    labels: LabelSource<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_sizes(&view, cls, cfg)?;
    if view.clean.len() < 2 * cfg.batch_size_clean {
        return Err(Error::InvalidConfig(format!(
            "clean set of {} needs at least 2 x batch_size_clean = {}",
            view.clean.len(),
            2 * cfg.batch_size_clean
        )));
    }
    if view.noisy.is_empty() {
        return Err(Error::EmptyBatch("noisy set"));
    }
    if let LabelSource::Lcn(l) = labels {
        l.validate()?;
        if l.num_classes != cls.num_classes || l.feature_dim != cls.feature_dim() {
            return Err(Error::InvalidConfig(format!(
                "correction network ({} classes, {} features) does not fit classifier ({} classes, {} features)",
                l.num_classes,
                l.feature_dim,
                cls.num_classes,
                cls.feature_dim()
            )));
        }
    }

    let mut w = initial_classifier(cls, cfg.seed)?;
    let mut velocity = w.zeros_like();
    let mut alpha = match labels {
        LabelSource::Lcn(l) => Some(initial_lcn(l, cfg.seed)?),
        LabelSource::FrozenIdentity => None,
    };
    let mut meta = match &alpha {
        Some(a) => Some((
            MetaGradState::new(a, LrDiag::Uniform(cfg.main_lr), cfg.k)?,
            MetaOptimizer::new(cfg.meta_optimizer, cfg.meta_momentum, a),
        )),
        None => None,
    };
    let mut clean_stream = clean_batches(view.clean.len(), cfg);
    let mut rec = Recorder {
        history: History::default(),
        cls,
        clean: view.clean,
        test,
        epoch_noisy: Vec::new(),
    };

    for epoch in 0..cfg.epochs {
        let factor = cfg.lr_factor(epoch);
        let lr = cfg.main_lr * factor;
        let meta_lr = cfg.meta_lr * factor;
        for noisy_idx in noisy_batches(view.noisy.len(), cfg, epoch) {
            let (eval_idx, train_idx) =
                split_clean_batch(&clean_stream.next_batch(cfg.batch_size_clean))?;
            let (noisy_x, noisy_labels) = rows(view.noisy, &noisy_idx)?;
            let (clean_x, clean_labels) = rows(view.clean, &train_idx)?;
            let batch = TrainBatch {
                noisy_x,
                noisy_labels,
                clean_x,
                clean_labels,
            };
            let corrector = match (labels, &alpha) {
                (LabelSource::Lcn(cfg), Some(alpha)) => Corrector::Network { cfg, alpha },
                _ => Corrector::Identity,
            };
            let step = rec.check(main_step(
                cls,
                &w,
                &mut velocity,
                corrector,
                &batch,
                lr,
                cfg.main_momentum,
            ))?;

            let mut clean_loss = None;
            if let (LabelSource::Lcn(lcn), Some(a), Some((state, opt))) =
                (labels, alpha.as_mut(), meta.as_mut())
            {
                let (eval_x, eval_labels) = rows(view.clean, &eval_idx)?;
                let (l_clean, g_next) =
                    rec.check(meta_loss_grad(cls, &step.w_next, &eval_x, &eval_labels))?;
                clean_loss = Some(l_clean);
                state.lr_diag = LrDiag::Uniform(lr);
                let v = state.lr_diag.apply(&g_next)?;
                let hvp = rec.check(mixed_hvp_fd(
                    cls,
                    lcn,
                    a,
                    &w,
                    &batch,
                    &v,
                    cfg.fd_epsilon_scale,
                ))?;
                rec.check(accumulate_meta_grad(state, &step.g_w, &g_next, &hvp))?;
                if state.is_complete() {
                    meta_step(a, state, opt, meta_lr)?;
                    rec.history.meta_updates += 1;
                    if !a.is_finite() {
                        return Err(rec.diverged(f64::NAN));
                    }
                }
            }
            w = step.w_next;
            rec.step(epoch, step.loss, step.noisy_loss, clean_loss)?;
        }
        rec.end_epoch(epoch, &w, lr)?;
    }
    Ok(TrainOutcome {
        w,
        alpha,
        history: rec.history,
    })
}

/// Plain training with one-hot labels on the selected data. Takes the same
/// number of steps per epoch as [`train_mlc`] so the budgets match.
pub fn train_baseline(
    view: TrainingView<'_>,
    test: Option<&Dataset>,
    cls: &ClassifierConfig,
    feed: Feed,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    check_sizes(&view, cls, cfg)?;
    let uses_noisy = feed != Feed::CleanOnly;
    let uses_clean = feed != Feed::NoisyOnly;
    if uses_noisy && view.noisy.is_empty() {
        return Err(Error::EmptyBatch("noisy set"));
    }
    if uses_clean && view.clean.is_empty() {
        return Err(Error::EmptyBatch("clean set"));
    }
    // Step budget follows the noisy set size even when it is not fed.
    let n_steps_ref = if view.noisy.is_empty() {
        view.clean.len()
    } else {
        view.noisy.len()
    };

    let mut w = initial_classifier(cls, cfg.seed)?;
    let mut velocity = w.zeros_like();
    let mut clean_stream = clean_batches(view.clean.len(), cfg);
    let dim = cls.input_dim;
    let mut rec = Recorder {
        history: History::default(),
        cls,
        clean: view.clean,
        test,
        epoch_noisy: Vec::new(),
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.main_lr * cfg.lr_factor(epoch);
        for noisy_idx in noisy_batches(n_steps_ref, cfg, epoch) {
            let (noisy_x, noisy_labels) = if uses_noisy {
                rows(view.noisy, &noisy_idx)?
            } else {
                (empty_rows(dim), Vec::new())
            };
            let (clean_x, clean_labels) = if uses_clean {
                rows(view.clean, &clean_stream.next_batch(cfg.batch_size_clean))?
            } else {
                (empty_rows(dim), Vec::new())
            };
            let batch = TrainBatch {
                noisy_x,
                noisy_labels,
                clean_x,
                clean_labels,
            };
            let step = rec.check(main_step(
                cls,
                &w,
                &mut velocity,
                Corrector::Identity,
                &batch,
                lr,
                cfg.main_momentum,
            ))?;
            w = step.w_next;
            rec.step(epoch, step.loss, step.noisy_loss, None)?;
        }
        rec.end_epoch(epoch, &w, lr)?;
    }
    Ok(TrainOutcome {
        w,
        alpha: None,
        history: rec.history,
    })
}
