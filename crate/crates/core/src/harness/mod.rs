//! Experiment runner: JSON configs, the four training methods, evaluation,
//! noise sweeps and report export.

mod config;
mod export;
pub mod gradcheck;
mod report;
mod run;

pub use config::{
    ClassifierSpec, DatasetSpec, ExperimentConfig, LcnSpec, Method, NoiseConfig, SplitConfig,
};
pub use export::{
    correction_stats_csv, export_report, heatmap_csv, history_csv, read_heatmap_csv, sweep_csv,
    write_atomic, CONFIG_FILE, CORRECTION_STATS_FILE, HEATMAP_FILE, HISTORY_FILE, SUMMARY_FILE,
};
pub use report::{
    evaluate, evaluate_predictions, CorrectionStats, EvalReport, GroupStats, Heatmap, RunReport,
    RunStatus,
};
pub use run::{
    build_bundle, load_dataset, mean_std, run_experiment, run_repeats, run_sweep,
    sweep_cell_config, SweepRow, SweepTable,
};
