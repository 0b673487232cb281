use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::report::{GroupStats, Heatmap, RunReport};
use super::run::SweepTable;
use crate::bilevel::EpochRecord;
use crate::error::{Error, Result};

pub const HISTORY_FILE: &str = "history.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const CORRECTION_STATS_FILE: &str = "correction_stats.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn history_csv(epochs: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,noisy_loss,clean_loss,test_accuracy,main_lr\n");
    for e in epochs {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.epoch,
            opt(e.noisy_loss),
            e.clean_loss,
            opt(e.test_accuracy),
            e.main_lr
        );
    }
    s
}

pub fn heatmap_csv(heatmap: &Heatmap) -> String {
    let c = heatmap.len();
    let mut s = String::from("true_class");
    for j in 0..c {
        let _ = write!(s, ",p{j}");
    }
    s.push('\n');
    for (i, row) in heatmap.iter().enumerate() {
        s.push_str(&i.to_string());
        match row {
            Some(row) => row.iter().for_each(|v| {
                let _ = write!(s, ",{v}");
            }),
            None => s.push_str(&",".repeat(c)),
        }
        s.push('\n');
    }
    s
}

pub fn correction_stats_csv(corrupted: &GroupStats, uncorrupted: &GroupStats) -> String {
    let mut s = String::from(
        "group,count,mean_max_prob,mean_given_label_prob,mean_true_label_prob,argmax_is_true\n",
    );
    for (name, g) in [("corrupted", corrupted), ("uncorrupted", uncorrupted)] {
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{}",
            g.count,
            g.mean_max_prob,
            g.mean_given_label_prob,
            g.mean_true_label_prob,
            g.argmax_is_true
        );
    }
    s
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut s = String::from("method,rho,runs,failed,mean_accuracy,std_accuracy\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.method,
            r.rho,
            r.runs,
            r.failed,
            opt(r.mean_accuracy),
            opt(r.std_accuracy)
        );
    }
    s
}

/// Writes the report files into `dir` (created if missing) and returns their
/// paths. Heatmap and correction statistics exist only for MLC runs.
pub fn export_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, contents.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put(HISTORY_FILE, history_csv(&report.history.epochs))?;
    if let Some(h) = &report.heatmap {
        put(HEATMAP_FILE, heatmap_csv(h))?;
    }
    if let Some(cs) = &report.correction_stats {
        put(
            CORRECTION_STATS_FILE,
            correction_stats_csv(&cs.corrupted, &cs.uncorrupted),
        )?;
    }
    put(CONFIG_FILE, report.config.to_json() + "\n")?;
    let summary = json!({
        "run_id": report.run_id,
        "method": report.method,
        "repeat": report.repeat,
        "status": report.status,
        "final_accuracy": report.final_accuracy,
        "eval": report.eval,
        "epochs": report.history.epochs.len(),
        "main_steps": report.history.steps.len(),
        "meta_updates": report.history.meta_updates,
        "correction_stats": report.correction_stats,
        "noise_matrix": report.noise_matrix,
        "config": report.config,
        "wall_clock_secs": report.wall_clock_secs,
    });
    put(SUMMARY_FILE, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(written)
}

/// Parses a heatmap file written by [`export_report`].
pub fn read_heatmap_csv(path: &Path) -> Result<Heatmap> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let cells: Vec<&str> = rec.iter().skip(1).collect();
        if cells.iter().all(|c| c.is_empty()) {
            rows.push(None);
            continue;
        }
        let row = cells
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 2,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(Some(row));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}
