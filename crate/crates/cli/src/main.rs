//! Command-line front end: dataset generation, training, evaluation,
//! dataset-size comparison and angle-map export.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "ris-anglemap", version, about = "Location-to-angle beam alignment for RIS-aided mmWave links")]
#[command(after_help = "Any config key can be overridden with a flag of the same name in kebab-case, \
    using dots for nested keys, e.g. --dataset-size 5000 --transformer.epochs 20.\n\
    ANGLEMAP_WORKERS sets the worker thread count.")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitPart {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the scene and write a labelled dataset CSV.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Also write the summary JSON here (it is always printed).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Train the classifier and both transformers on a dataset CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV; defaults to the checkpoint path with a `.losses.csv` extension.
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Score a checkpoint and the search baselines on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Part of the 3:1:1 split (seeded like training) to evaluate on.
        #[arg(long, value_enum, default_value = "all")]
        split: SplitPart,
        /// Metrics JSON path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one angle map per dataset size and compare it with the searches.
    Compare {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predicted and true angle grids for every angle type.
    ExportAnglemap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Custom grid rows; by default the two UE zones are exported on
        /// the unjittered sampling grid of `dataset_size`.
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        cols: Option<usize>,
        /// Custom grid region `x0,x1,y0,y1`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        region: Option<Vec<f64>>,
    },
}

/// Separates `--config-key value` overrides from the arguments clap parses.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if name == "config" || !RunConfig::is_key(&name) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => iter.next().with_context(|| format!("--{name} needs a value"))?,
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

fn configure_workers() -> Result<()> {
    if let Ok(raw) = std::env::var("ANGLEMAP_WORKERS") {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).context("ANGLEMAP_WORKERS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use ris_anglemap::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Shape(_)) => "shape",
        Some(E::Singular { .. }) => "singular",
        Some(E::DegenerateGeometry(_)) => "degenerate_geometry",
        Some(E::Domain(_)) => "domain",
        Some(E::Contract(_)) => "contract",
        Some(E::Infeasible { .. }) => "infeasible",
        Some(E::Vocabulary(_)) => "vocabulary",
        Some(E::Truncation(_)) => "truncation",
        Some(E::Compatibility(_)) => "compatibility",
        Some(E::Parse { .. }) => "parse",
        Some(E::Io(_)) => "io",
        Some(E::Json(_)) => "json",
        None if err.chain().any(|c| c.is::<std::io::Error>()) => "io",
        None => "invalid_input",
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    configure_workers()?;
    let cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::Generate { out, summary } => commands::generate(&cfg, &out, summary.as_deref()),
        Command::Train { data, out, losses } => {
            let losses = losses.unwrap_or_else(|| out.with_extension("losses.csv"));
            commands::train(&cfg, &data, &out, &losses)
        }
        Command::Evaluate { model, data, split, out } => commands::evaluate(&cfg, &model, &data, split, out.as_deref()),
        Command::Compare { out } => commands::compare(&cfg, &out),
        Command::ExportAnglemap { model, out_dir, rows, cols, region } => {
            commands::export_anglemap(&cfg, &model, &out_dir, rows, cols, region.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => return fail("usage", format!("{e:#}"), 2),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(error_kind(&e), format!("{e:#}"), 1),
    }
}
