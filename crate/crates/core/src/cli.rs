//! `udalab gen | run | sweep`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{sweep_key, RunConfig, SWEEPABLE};
use crate::datagen::{generate_domain, generate_domain_with_hard, LabeledDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::trainer::{run_with_model, TrainingReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status for invalid input.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures during a run.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "udalab", version, about = "Sample-dropout / mutual-teaching domain adaptation lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Flat key=value config file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the training seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write source/target corpus files and the hard-sample sidecar.
    Gen(Common),
    /// Train once and write report.json, curves.csv, checkpoint.txt, manifest.cfg.
    Run(Common),
    /// One run per value of a config parameter plus an aggregated sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
}

pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

/// Source, target and hard ids, either generated or loaded from `corpus_dir`.
pub fn load_corpus(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset, BTreeSet<usize>)> {
    match &cfg.corpus.corpus_dir {
        Some(dir) => {
            let source = io::read_dataset(&fs::read_to_string(dir.join("source.csv"))?)?;
            let target = io::read_dataset(&fs::read_to_string(dir.join("target.csv"))?)?;
            let hard = match fs::read_to_string(dir.join("hard_ids.txt")) {
                Ok(t) => io::read_hard_ids(&t)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeSet::new(),
                Err(e) => return Err(e.into()),
            };
            Ok((source, target, hard))
        }
        None => {
            let source = generate_domain(&cfg.corpus.source_config())?;
            let (target, hard) = generate_domain_with_hard(&cfg.corpus.target_config())?;
            Ok((source, target, hard))
        }
    }
}

fn write_corpus(dir: &Path, source: &LabeledDataset, target: &LabeledDataset, hard: &BTreeSet<usize>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("source.csv"), io::write_dataset(source))?;
    fs::write(dir.join("target.csv"), io::write_dataset(target))?;
    fs::write(dir.join("hard_ids.txt"), io::write_hard_ids(hard))?;
    Ok(())
}

pub fn manifest_text(cfg: &RunConfig, out: &Path, command: &str) -> String {
    format!(
        "{}manifest.tool_version={TOOL_VERSION}\nmanifest.command={command}\nmanifest.out_dir={}\n",
        cfg.to_text(),
        out.display()
    )
}

pub fn cmd_gen(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let (source, target, hard) = load_corpus(&cfg)?;
    write_corpus(&common.out, &source, &target, &hard)?;
    fs::write(common.out.join("manifest.cfg"), manifest_text(&cfg, &common.out, "gen"))?;
    if !common.quiet {
        eprintln!("wrote {} source / {} target samples ({} hard) to {}", source.len(), target.len(), hard.len(), common.out.display());
    }
    Ok(())
}

/// Runs one configuration into `out` and returns its report.
pub fn execute_run(cfg: &RunConfig, out: &Path, quiet: bool) -> Result<TrainingReport> {
    cfg.validate()?;
    let (source, target, hard) = load_corpus(cfg)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.cfg"), manifest_text(cfg, out, "run"))?;
    write_corpus(out, &source, &target, &hard)?;
    let (report, model) = run_with_model(&source, &target, &cfg.experiment)?;
    fs::write(out.join("report.json"), report.to_json()?)?;
    fs::write(out.join("curves.csv"), io::write_curves(&report))?;
    fs::write(out.join("checkpoint.txt"), io::write_checkpoint(&model))?;
    fs::write(out.join("timing.json"), serde_json::to_string_pretty(&report.epoch_seconds)?)?;
    if !quiet {
        let m = report.final_metrics;
        eprintln!(
            "{}: mAP={:.4} rank1={:.4} rank5={:.4} rank10={:.4}",
            out.display(),
            m.map,
            m.rank1,
            m.rank5,
            m.rank10
        );
    }
    Ok(report)
}

pub fn cmd_run(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    execute_run(&cfg, &common.out, common.quiet).map(|_| ())
}

pub fn cmd_sweep(common: &Common, param: &str, values: &str) -> Result<()> {
    let key = sweep_key(param).ok_or_else(|| {
        let known: Vec<&str> = SWEEPABLE.iter().map(|(p, _)| *p).collect();
        Error::Config(format!("--param: `{param}` is not sweepable (choose from {})", known.join(", ")))
    })?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::Config("--values: empty value list".into()));
    }
    let base = load_config(common)?;
    let runs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(key, v)?;
            cfg.validate()?;
            Ok((v.clone(), cfg))
        })
        .collect::<Result<Vec<_>>>()?;

    let reports = runs
        .par_iter()
        .map(|(v, cfg)| execute_run(cfg, &common.out.join(format!("{param}={v}")), common.quiet))
        .collect::<Result<Vec<_>>>()?;

    let mut csv = format!("{param},{}\n", io::SWEEP_COLUMNS);
    for ((v, _), report) in runs.iter().zip(&reports) {
        csv.push_str(&io::sweep_row(v, report));
    }
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("sweep.csv"), csv)?;
    Ok(())
}

/// Dispatches a parsed command and maps errors to exit codes.
pub fn execute(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Run(c) => cmd_run(c),
        Command::Sweep { common, param, values } => cmd_sweep(common, param, values),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("udalab: {e}");
            if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

/// Entry point taking argv, for tests and the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            code
        }
    }
}
