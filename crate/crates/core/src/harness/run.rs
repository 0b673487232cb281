use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, Method};
use super::report::{correction_analysis, evaluate, RunReport, RunStatus};
use crate::bilevel::{train_baseline, train_mlc, History, TrainOutcome};
use crate::data::{gen_blobs, load_csv, make_bundle, CsvSchema, Dataset, DatasetBundle};
use crate::error::{Error, Result};
use crate::noise::CorruptionMatrix;

/// Materializes the configured rows (before splitting).
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSpec::Blobs {
            num_classes,
            dim,
            per_class,
            spread,
            seed,
        } => gen_blobs(
            *num_classes,
            *dim,
            &vec![*per_class; *num_classes],
            *spread,
            *seed,
        ),
        DatasetSpec::Csv {
            path,
            label_column,
            feature_columns,
        } => {
            let schema = CsvSchema {
                label_column: label_column.clone(),
                feature_columns: feature_columns.clone(),
            };
            Ok(load_csv(path, &schema)?.0)
        }
    }
}

/// Dataset, split and noise of the configuration as given (no repeat offset).
pub fn build_bundle(cfg: &ExperimentConfig) -> Result<DatasetBundle> {
    let data = load_dataset(cfg)?;
    let noise = cfg.noise_spec(data.num_classes);
    make_bundle(&data, &cfg.split_spec(), &noise, cfg.split.seed)
}

/// Runs repeat `repeat` of `cfg`. Divergence yields a failed report with
/// the partial history; other errors are returned.
pub fn run_experiment(cfg: &ExperimentConfig, repeat: usize) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let rc = cfg.for_repeat(repeat);
    let bundle = build_bundle(&rc)?;
    let c = bundle.num_classes();
    let cls = rc.classifier_config(bundle.dim(), c);
    let lcn = rc.lcn_config(c)?;
    info!(
        "{} repeat {repeat}: {} {} clean / {} noisy / {} test",
        cfg.run_id,
        cfg.method,
        bundle.clean.len(),
        bundle.noisy.len(),
        bundle.test.len()
    );

    let view = bundle.training_view();
    let trained = match cfg.method.feed() {
        None => train_mlc(view, Some(&bundle.test), &cls, &lcn, &rc.train),
        Some(feed) => train_baseline(view, Some(&bundle.test), &cls, feed, &rc.train),
    };
    let noise_matrix =
        CorruptionMatrix::empirical(bundle.hidden_true_of_noisy(), &bundle.noisy.labels, c)
            .map(|m| m.rows())
            .unwrap_or_default();

    let mut report = RunReport {
        run_id: cfg.run_id.clone(),
        method: cfg.method,
        repeat,
        status: RunStatus::Completed,
        final_accuracy: None,
        eval: None,
        history: History::default(),
        heatmap: None,
        correction_stats: None,
        noise_matrix,
        config: cfg.clone(),
        wall_clock_secs: 0.0,
    };
    match trained {
        Ok(TrainOutcome { w, alpha, history }) => {
            let eval = evaluate(&cls, &w, &bundle.test)?;
            report.final_accuracy = Some(eval.accuracy);
            report.eval = Some(eval);
            report.history = history;
            if let Some(alpha) = alpha {
                let (heatmap, stats) = correction_analysis(
                    &cls,
                    &lcn,
                    &w,
                    &alpha,
                    &bundle.noisy,
                    bundle.hidden_true_of_noisy(),
                )?;
                report.heatmap = Some(heatmap);
                report.correction_stats = Some(stats);
            }
        }
        Err(Error::Diverged {
            step,
            loss,
            history,
        }) => {
            warn!(
                "{} repeat {repeat} diverged at step {step} (loss {loss})",
                cfg.run_id
            );
            report.status = RunStatus::Failed {
                kind: "diverged".into(),
                message: format!("training diverged at step {step}: loss {loss}"),
            };
            report.history = *history;
        }
        Err(e) => return Err(e),
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// All repeats of `cfg`, in parallel, ordered by repeat index.
pub fn run_repeats(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_experiment(cfg, r))
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub rho: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// One sweep cell's configuration.
pub fn sweep_cell_config(base: &ExperimentConfig, method: Method, rho: f64) -> ExperimentConfig {
    let mut c = base.clone();
    c.method = method;
    c.noise.rho = rho;
    c.run_id = format!("{}_{}_rho{}", base.run_id, method, rho);
    c
}

/// Runs every (method, ρ, repeat) cell in parallel and aggregates test
/// accuracy per (method, ρ). A failing cell is counted, not fatal.
///
/// With `export_dir`, each cell's report is exported under
/// `export_dir/<cell run id>/repeat<r>/`.
pub fn run_sweep(
    base: &ExperimentConfig,
    rhos: &[f64],
    methods: &[Method],
    export_dir: Option<&Path>,
) -> Result<(SweepTable, Vec<RunReport>)> {
    if let Some(rho) = rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidConfig(format!("rho {rho} outside [0, 1]")));
    }
    if rhos.is_empty() || methods.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one rho and one method".into(),
        ));
    }
    let mut cells = Vec::new();
    for &m in methods {
        for &rho in rhos {
            let cfg = sweep_cell_config(base, m, rho);
            cfg.validate()?;
            for r in 0..base.repeats {
                cells.push((cfg.clone(), r));
            }
        }
    }
    let outcomes: Vec<(Method, f64, Option<RunReport>)> = cells
        .par_iter()
        .map(|(cfg, r)| {
            let outcome = run_experiment(cfg, *r).and_then(|rep| {
                if let Some(dir) = export_dir {
                    super::export::export_report(
                        &rep,
                        &dir.join(&cfg.run_id).join(format!("repeat{r}")),
                    )?;
                }
                Ok(rep)
            });
            match outcome {
                Ok(rep) => (cfg.method, cfg.noise.rho, Some(rep)),
                Err(e) => {
                    warn!("sweep cell {} repeat {r} failed: {e}", cfg.run_id);
                    (cfg.method, cfg.noise.rho, None)
                }
            }
        })
        .collect();

    let mut table = SweepTable::default();
    for &m in methods {
        for &rho in rhos {
            let group: Vec<&Option<RunReport>> = outcomes
                .iter()
                .filter(|(om, or, _)| *om == m && *or == rho)
                .map(|(_, _, rep)| rep)
                .collect();
            let accs: Vec<f64> = group
                .iter()
                .filter_map(|rep| rep.as_ref().and_then(|r| r.final_accuracy))
                .collect();
            let stats = mean_std(&accs);
            table.rows.push(SweepRow {
                method: m,
                rho,
                runs: group.len(),
                failed: group.len() - accs.len(),
                mean_accuracy: stats.map(|s| s.0),
                std_accuracy: stats.map(|s| s.1),
            });
        }
    }
    let reports = outcomes.into_iter().filter_map(|(_, _, r)| r).collect();
    Ok((table, reports))
}
