//! Experiment harness for the prion proliferation model: config parsing,
//! runners for each experiment and the on-disk record format.

pub mod config;
pub mod experiments;
pub mod output;
pub mod record;
pub mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use config::{parse_config_with, ConfigErrors, Experiment, ParseContext, RunConfig};
use record::{Diagnostics, ErrorReport, ExperimentRecord, Provenance, RunStatus};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// TOML run configuration (optional for `validate`).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output root; overrides `[output] dir`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed for randomized checks; overrides the config value.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the sparse operator L_V next to the results.
    #[arg(long)]
    pub dump_operator: bool,
    /// Include the discrete-model comparison in `validate`.
    #[arg(long)]
    pub discrete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Ok = 0,
    Runtime = 1,
    Config = 2,
    ChecksFailed = 3,
}

#[derive(Debug)]
pub struct RunReport {
    pub exit: ExitKind,
    /// Directory holding `summary.json` (or `error.json` for config errors).
    pub dir: PathBuf,
    pub record: Option<ExperimentRecord>,
    pub config_errors: Option<ConfigErrors>,
}

const DEFAULT_OUT: &str = "prion-out";

fn load(experiment: Experiment, args: &RunArgs) -> Result<RunConfig, ConfigErrors> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| ConfigErrors {
            issues: vec![config::ConfigIssue {
                field: "<file>".into(),
                line: None,
                message: format!("cannot read {}: {e}", path.display()),
            }],
        })?,
        None => String::new(),
    };
    let ctx = ParseContext {
        experiment: Some(experiment),
        discrete: args.discrete,
    };
    let mut cfg = parse_config_with(&text, ctx)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.display().to_string();
    }
    Ok(cfg)
}

fn write_error(dir: &Path, report: &ErrorReport) {
    if let Err(e) = fs::create_dir_all(dir).map_err(anyhow::Error::from).and_then(|_| output::write_json(dir, "error.json", report)) {
        log::error!("could not write error.json: {e}");
    }
}

/// Parses, runs and records one experiment.
pub fn execute(experiment: Experiment, args: &RunArgs) -> RunReport {
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let cfg = match load(experiment, args) {
        Ok(cfg) => cfg,
        Err(errors) => {
            let root = args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let dir = root.join(format!("{experiment}-invalid"));
            for issue in &errors.issues {
                eprintln!("config error: {issue}");
            }
            write_error(
                &dir,
                &ErrorReport {
                    kind: "config".into(),
                    message: errors.to_string(),
                    issues: errors.issues.clone(),
                },
            );
            return RunReport {
                exit: ExitKind::Config,
                dir,
                record: None,
                config_errors: Some(errors),
            };
        }
    };
    let digest = output::config_digest(&cfg);
    let dir = output::run_directory(Path::new(&cfg.output.dir), &cfg, &digest);
    let grid_hash = cfg
        .grid
        .build(cfg.model.x0)
        .map(|g| output::grid_hash(&g))
        .unwrap_or_default();
    let provenance = Provenance {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_digest: digest,
        grid_hash,
        seed: cfg.seed,
    };
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("cannot create {}: {e}", dir.display());
        return RunReport {
            exit: ExitKind::Runtime,
            dir,
            record: None,
            config_errors: None,
        };
    }
    log::info!("running {experiment} into {}", dir.display());
    let outcome = experiments::run(&cfg, args.dump_operator, cfg.seed);
    let (record, exit) = match outcome {
        Ok(out) => {
            let mut diagnostics = out.diagnostics;
            let mut write_failure = None;
            if cfg.output.csv {
                for t in &out.tables {
                    match t.write(&dir) {
                        Ok(file) => diagnostics.files.push(file),
                        Err(e) => write_failure = Some(e.to_string()),
                    }
                }
            }
            let exit = match (out.status, experiment) {
                _ if write_failure.is_some() => ExitKind::Runtime,
                (RunStatus::Partial, Experiment::Validate) => ExitKind::ChecksFailed,
                _ => ExitKind::Ok,
            };
            let record = ExperimentRecord {
                experiment,
                status: if write_failure.is_some() { RunStatus::Failed } else { out.status },
                config: cfg.clone(),
                results: Some(out.results),
                diagnostics,
                provenance,
                errors: write_failure.into_iter().collect(),
            };
            (record, exit)
        }
        Err(e) => {
            let message = format!("{e:#}");
            eprintln!("{experiment} failed: {message}");
            write_error(
                &dir,
                &ErrorReport {
                    kind: "runtime".into(),
                    message: message.clone(),
                    issues: vec![],
                },
            );
            let record = ExperimentRecord {
                experiment,
                status: RunStatus::Failed,
                config: cfg.clone(),
                results: None,
                diagnostics: Diagnostics::default(),
                provenance,
                errors: vec![message],
            };
            (record, ExitKind::Runtime)
        }
    };
    let mut exit = exit;
    if let Err(e) = output::write_json(&dir, "summary.json", &record) {
        eprintln!("cannot write summary.json: {e:#}");
        exit = ExitKind::Runtime;
    }
    RunReport {
        exit,
        dir,
        record: Some(record),
        config_errors: None,
    }
}
