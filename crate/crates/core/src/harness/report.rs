use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::bilevel::lcn_features;
use crate::bilevel::History;
use crate::data::Dataset;
use crate::diffcore::ParamVector;
use crate::error::{Error, Result};
use crate::models::{lcn_predict, predict, ClassifierConfig, LcnConfig, SoftLabel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

/// Scores predicted classes against labels.
pub fn evaluate_predictions(
    predicted: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<EvalReport> {
    if predicted.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            lhs: vec![predicted.len()],
            rhs: vec![labels.len()],
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch("evaluation set"));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &y) in predicted.iter().zip(labels) {
        for label in [p, y] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
        }
        confusion[y][p] += 1;
    }
    let hits: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    Ok(EvalReport {
        accuracy: hits as f64 / labels.len() as f64,
        per_class_accuracy,
        confusion,
    })
}

/// Argmax predictions of the classifier on `data`, scored against its labels.
pub fn evaluate(cls: &ClassifierConfig, w: &ParamVector, data: &Dataset) -> Result<EvalReport> {
    let pred = predict(cls, w, &data.features)?;
    evaluate_predictions(&pred, &data.labels, data.num_classes)
}

/// Summary of the correction network's output on one group of noisy
/// examples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    /// Mean of the largest corrected-label probability.
    pub mean_max_prob: f64,
    /// Mean probability left on the observed (noisy) label.
    pub mean_given_label_prob: f64,
    /// Mean probability placed on the hidden true label.
    pub mean_true_label_prob: f64,
    /// Fraction whose corrected argmax is the true label.
    pub argmax_is_true: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    /// Noisy examples whose observed label differs from the true one.
    pub corrupted: GroupStats,
    pub uncorrupted: GroupStats,
}

/// `heatmap[true][j]`: mean corrected probability of class `j` over noisy
/// examples of hidden class `true` (`None` when no such example exists).
pub type Heatmap = Vec<Option<Vec<f64>>>;

pub(crate) fn correction_analysis(
    cls: &ClassifierConfig,
    lcn: &LcnConfig,
    w: &ParamVector,
    alpha: &ParamVector,
    noisy: &Dataset,
    true_labels: &[usize],
) -> Result<(Heatmap, CorrectionStats)> {
    let c = lcn.num_classes;
    let features = lcn_features(cls, lcn, w, &noisy.features)?;
    let soft = lcn_predict(lcn, alpha, &features, &noisy.labels)?;
    Ok((
        heatmap(&soft, true_labels, c),
        correction_stats(&soft, &noisy.labels, true_labels),
    ))
}

pub(crate) fn heatmap(soft: &[SoftLabel], true_labels: &[usize], num_classes: usize) -> Heatmap {
    let mut sums = vec![vec![0.0; num_classes]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (s, &t) in soft.iter().zip(true_labels) {
        counts[t] += 1;
        for (acc, p) in sums[t].iter_mut().zip(s.probs()) {
            *acc += p;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(row, n)| (n > 0).then(|| row.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

pub(crate) fn correction_stats(
    soft: &[SoftLabel],
    given: &[usize],
    true_labels: &[usize],
) -> CorrectionStats {
    let mut groups = [GroupStats::default(), GroupStats::default()];
    for ((s, &g), &t) in soft.iter().zip(given).zip(true_labels) {
        let probs = s.probs();
        let grp = &mut groups[usize::from(g != t)];
        grp.count += 1;
        grp.mean_max_prob += probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        grp.mean_given_label_prob += probs[g];
        grp.mean_true_label_prob += probs[t];
        grp.argmax_is_true += f64::from(u8::from(s.argmax() == t));
    }
    for grp in &mut groups {
        if grp.count > 0 {
            let n = grp.count as f64;
            grp.mean_max_prob /= n;
            grp.mean_given_label_prob /= n;
            grp.mean_true_label_prob /= n;
            grp.argmax_is_true /= n;
        }
    }
    let [uncorrupted, corrupted] = groups;
    CorrectionStats {
        corrupted,
        uncorrupted,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { kind: String, message: String },
}

/// Everything one training run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub method: Method,
    pub repeat: usize,
    pub status: RunStatus,
    pub final_accuracy: Option<f64>,
    pub eval: Option<EvalReport>,
    pub history: History,
    /// Only for MLC runs that completed.
    pub heatmap: Option<Heatmap>,
    pub correction_stats: Option<CorrectionStats>,
    /// Empirical corruption matrix of the noisy split, `[noisy][true]`.
    pub noise_matrix: Vec<Vec<f64>>,
    pub config: ExperimentConfig,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed
    }
}
