//! Command-line pipeline: corpus generation, language-model training, embedding
//! extraction, probing, compiled-program verification and reporting.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod store;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use counterprobe::counterlang::Language;
use thiserror::Error;

use config::ExperimentConfig;
use pipeline::{Context, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("missing {}: {hint}", path.display())]
    Missing { path: PathBuf, hint: String },
    #[error("hash mismatch for {}: {message}", path.display())]
    HashMismatch { path: PathBuf, message: String },
    #[error("no result records to report")]
    NoResults,
    #[error("bound failed:\n  {}", .0.join("\n  "))]
    Bound(Vec<String>),
    #[error("{} is locked by another run (remove it if stale)", .0.display())]
    Locked(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Dataset(#[from] counterprobe::dataset::DatasetError),
    #[error(transparent)]
    Counter(#[from] counterprobe::counterlang::CounterError),
    #[error(transparent)]
    Model(#[from] counterprobe::transformer::ModelError),
    #[error(transparent)]
    Probe(#[from] counterprobe::probe::ProbeError),
    #[error(transparent)]
    Rasp(#[from] counterprobe::rasp::RaspError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// 1 usage or configuration, 2 failed bound, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Bound(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } | CliError::Locked(_) => 3,
            CliError::Dataset(counterprobe::dataset::DatasetError::Io(_)) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "counterprobe", version, about = "Train transformers on counter languages and probe them for stack depth")]
pub struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for the experiment.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Rerun the stage even when its inputs are unchanged.
    #[arg(long, global = true)]
    pub force: bool,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the training and held-out corpora.
    Gen {
        /// dyck1 or shuffleK
        #[arg(long)]
        lang: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        min_len: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        heldout: Option<usize>,
    },
    /// Train the language model.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write per-stack probing datasets from the trained model's final layer.
    Extract,
    /// Train task and control probes.
    Probe {
        /// `all`, a list `1,3` or a range `1..3`
        #[arg(long)]
        stacks: Option<String>,
        /// Hidden-layer counts: `all`, a list `0,2` or an inclusive range `0..6`
        #[arg(long)]
        archs: Option<String>,
    },
    /// Verify the compiled Dyck-1 program and probe its stream.
    Rasp {
        #[arg(long, default_value = "0")]
        archs: String,
        /// Probe training epochs on the compiled stream.
        #[arg(long, default_value_t = pipeline::RASP_PROBE_EPOCHS)]
        epochs: usize,
    },
    /// Charts and summary tables over one or more experiment directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

/// Parses `all`, `a..b`, `a..=b` (both inclusive) or a comma-separated list.
pub fn parse_selection(text: &str, all: std::ops::RangeInclusive<usize>) -> Result<Option<Vec<usize>>> {
    let text = text.trim();
    if text == "all" {
        return Ok(None);
    }
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("`{s}` is not a number in `{text}`")))
    };
    let list: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(CliError::Usage(format!("empty range `{text}`")));
        }
        (a..=b).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if let Some(v) = list.iter().find(|v| !all.contains(v)) {
        return Err(CliError::Usage(format!("{v} outside {}..={}", all.start(), all.end())));
    }
    let mut dedup = Vec::new();
    for v in list {
        if !dedup.contains(&v) {
            dedup.push(v);
        }
    }
    Ok(Some(dedup))
}

fn parse_language(text: &str) -> Result<Language> {
    text.parse::<Language>()
        .map_err(|e| CliError::Usage(format!("--lang {text}: {e}")))
}

/// Builds the effective configuration: `--config`, else the output directory's saved
/// config, else defaults; then command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let saved = cli.out.as_ref().map(|o| o.join("config.toml")).filter(|p| p.exists());
    let mut cfg = match (&cli.config, saved) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(path)) => ExperimentConfig::load(&path)?,
        (None, None) => ExperimentConfig::new(Language::Dyck1, 0),
    };
    let from_defaults = cli.config.is_none() && !cli.out.as_ref().is_some_and(|o| o.join("config.toml").exists());
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    match &cli.command {
        Command::Gen {
            lang,
            n,
            min_len,
            max_len,
            heldout,
        } => {
            if let Some(lang) = lang {
                let language = parse_language(lang)?;
                cfg.set_language(language);
                if from_defaults && cli.out.is_none() {
                    cfg.output_dir = PathBuf::from("runs").join(language.to_string());
                }
            }
            if let Some(n) = n {
                cfg.corpus.n = *n;
            }
            if let Some(v) = min_len {
                cfg.corpus.min_len = *v;
            }
            if let Some(v) = max_len {
                cfg.corpus.max_len = *v;
            }
            if let Some(v) = heldout {
                cfg.corpus.heldout = *v;
            }
        }
        Command::Train { epochs: Some(e) } => cfg.transformer.epochs = *e,
        Command::Probe { archs: Some(a), .. } => {
            if let Some(list) = parse_selection(a, 0..=counterprobe::probe::MAX_HIDDEN_LAYERS)? {
                cfg.probe.archs = list;
            } else {
                cfg.probe.archs = (0..=counterprobe::probe::MAX_HIDDEN_LAYERS).collect();
            }
        }
        _ => {}
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Report { dirs } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report"));
        let summary = report::report(dirs, &out)?;
        if !cli.quiet {
            for m in &summary.mean_best {
                eprintln!("report: {} mean best task accuracy {:.4} over {} stacks", m.language, m.mean_best_task_acc, m.stacks);
            }
            for r in summary.ordering.iter().filter(|r| !r.holds) {
                eprintln!(
                    "warning: {} ({:.4}) below {} ({:.4})",
                    r.higher, r.mean_higher, r.lower, r.mean_lower
                );
            }
            eprintln!("report: wrote {}", out.display());
        }
        return Ok(());
    }
    let cfg = resolve_config(&cli)?;
    let ctx = Context::new(cfg, cli.force, cli.quiet);
    let outcome = match &cli.command {
        Command::Gen { .. } => pipeline::gen(&ctx)?,
        Command::Train { .. } => pipeline::train(&ctx)?,
        Command::Extract => pipeline::extract(&ctx)?,
        Command::Probe { stacks, .. } => {
            let k = ctx.cfg.language().counters();
            let stacks = match stacks {
                Some(s) => parse_selection(s, 1..=k)?,
                None => None,
            };
            pipeline::probe(&ctx, stacks.as_deref())?
        }
        Command::Rasp { archs, epochs } => {
            let archs = parse_selection(archs, 0..=counterprobe::probe::MAX_HIDDEN_LAYERS)?
                .unwrap_or_else(|| (0..=counterprobe::probe::MAX_HIDDEN_LAYERS).collect());
            if *epochs == 0 {
                return Err(CliError::Usage("--epochs must be positive".into()));
            }
            pipeline::rasp(&ctx, &archs, *epochs)?
        }
        Command::Report { .. } => unreachable!(),
    };
    if outcome == Outcome::Ran && !cli.quiet {
        eprintln!("wrote {}", ctx.store.root().display());
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
