use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;

use mlc_core::harness::{
    export_report, gradcheck::gradcheck_suite, mean_std, run_repeats, run_sweep, sweep_csv,
    write_atomic, DatasetSpec, ExperimentConfig, Method,
};
use mlc_core::Error;

#[derive(Parser)]
#[command(name = "mlc", version, about = "Meta label correction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration, optionally exporting every repeat.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `repeats` from the config.
        #[arg(long)]
        repeats: Option<usize>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy of each method across noise levels.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated noise levels in [0, 1].
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        /// Comma-separated methods (default: all four).
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config file, printing it with every default filled in.
    ValidateConfig { config: PathBuf },
    /// Randomized gradient, stop-gradient, meta-gradient and HVP checks.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Failure {
    kind: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

/// Loads a config; a relative CSV path is taken relative to the config file.
fn load_config(path: &Path, repeats: Option<usize>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let DatasetSpec::Csv { path: csv, .. } = &mut cfg.dataset {
        if csv.is_relative() {
            if let Some(dir) = path.parent() {
                *csv = dir.join(&*csv);
            }
        }
    }
    if let Some(r) = repeats {
        cfg.repeats = r;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(config: &Path, repeats: Option<usize>, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load_config(config, repeats)?;
    let out = out.or_else(|| cfg.output_dir.clone());
    let reports = run_repeats(&cfg)?;
    if let Some(dir) = &out {
        for rep in &reports {
            let d = dir.join(&cfg.run_id).join(format!("repeat{}", rep.repeat));
            export_report(rep, &d)?;
            info!("wrote {}", d.display());
        }
    }
    let accs: Vec<f64> = reports.iter().filter_map(|r| r.final_accuracy).collect();
    let stats = mean_std(&accs);
    let runs: Vec<_> = reports
        .iter()
        .map(
            |r| json!({"repeat": r.repeat, "status": r.status, "final_accuracy": r.final_accuracy}),
        )
        .collect();
    println!(
        "{}",
        json!({
            "run_id": cfg.run_id,
            "method": cfg.method,
            "runs": runs,
            "mean_accuracy": stats.map(|s| s.0),
            "std_accuracy": stats.map(|s| s.1),
        })
    );
    let failed = reports.len() - accs.len();
    if failed > 0 {
        return Err(Failure {
            kind: "diverged".into(),
            message: format!("{failed} of {} repeats failed", reports.len()),
        });
    }
    Ok(())
}

fn sweep(
    config: &Path,
    rho: &[f64],
    methods: Vec<Method>,
    repeats: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let cfg = load_config(config, repeats)?;
    let methods = if methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        methods
    };
    let out = out.or_else(|| cfg.output_dir.clone());
    let (table, _) = run_sweep(&cfg, rho, &methods, out.as_deref())?;
    let csv = sweep_csv(&table);
    if let Some(dir) = &out {
        let p = dir.join("sweep.csv");
        write_atomic(&p, csv.as_bytes())?;
        info!("wrote {}", p.display());
    }
    print!("{csv}");
    Ok(())
}

fn gradcheck(draws: usize, seed: u64) -> Result<(), Failure> {
    let outcomes = gradcheck_suite(draws, seed)?;
    for o in &outcomes {
        println!("{}", serde_json::to_string(o).expect("outcome serializes"));
    }
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            kind: "gradcheck_failed".into(),
            message: format!("failed checks: {}", failed.join(", ")),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MLC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": "usage", "message": e.to_string().trim_end()})
            );
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            repeats,
            out,
        } => run(&config, repeats, out),
        Command::Sweep {
            config,
            rho,
            methods,
            repeats,
            out,
        } => sweep(&config, &rho, methods, repeats, out),
        Command::ValidateConfig { config } => load_config(&config, None)
            .map(|cfg| println!("{}", cfg.to_json()))
            .map_err(Failure::from),
        Command::Gradcheck { draws, seed } => gradcheck(draws, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({"error": f.kind, "message": f.message}));
            ExitCode::FAILURE
        }
    }
}
