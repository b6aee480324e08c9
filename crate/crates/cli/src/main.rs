//! `adspoi` command-line driver.

mod commands;

use std::path::PathBuf;

use adspoi::config::Variant;
use adspoi::ingest::SplitKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "adspoi", version, about = "Multi-state next-POI recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that train models.
#[derive(Args, Clone)]
pub struct RunArgs {
    /// Run config (TOML). Defaults apply to every omitted field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file; overrides `data.dataset` in the config.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seeds; overrides `run.seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Fixed-order parallel reductions.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Foursquare,
    Gowalla,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    TwoRegime,
    Cycle,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Axis {
    #[value(name = "K")]
    K,
    #[value(name = "d")]
    D,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean and filter a raw check-in dump into a dataset file.
    Preprocess {
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Dataset label; defaults to the input file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = adspoi::ingest::DEFAULT_MIN_USER)]
        min_user: usize,
        #[arg(long, default_value_t = adspoi::ingest::DEFAULT_MIN_POI)]
        min_poi: usize,
    },
    /// Generate a synthetic multi-regime dataset.
    Synth {
        /// Generator config (TOML); overrides `--preset`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "two-regime")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write a checkpoint and its history CSV.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Full-ranking evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config the checkpoint must have been trained with.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: SplitKind,
        /// Variant label written into the report.
        #[arg(long, default_value = "checkpoint")]
        label: String,
        /// Report JSON; a per-seed CSV is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test each ablation variant over all seeds.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Variants to run (comma-separated); all by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variant: Option<Vec<Variant>>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sensitivity sweep over K (fixed d_s) or over d (K = 1).
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient check; exits 0 iff within tolerance.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-query inference latency, throughput, memory and FLOPs.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 128)]
        seq_len: usize,
        #[arg(long, default_value_t = 100)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge report JSON files into one tidy CSV.
    PlotData {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: adspoi::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitKind, String> {
    s.parse().map_err(|e: adspoi::Error| e.to_string())
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ADSPOI_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("ADSPOI_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n >= 1, "ADSPOI_THREADS must be >= 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|()| run(cli.command)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Preprocess {
            input,
            format,
            out,
            name,
            min_user,
            min_poi,
        } => commands::preprocess(&input, format, &out, name, min_user, min_poi),
        Command::Synth {
            config,
            preset,
            seed,
            out,
        } => commands::synth(config.as_deref(), preset, seed, &out),
        Command::Train {
            run,
            variant,
            out,
            resume,
        } => commands::train(&run, variant, &out, resume.as_deref()),
        Command::Eval {
            checkpoint,
            config,
            dataset,
            split,
            label,
            out,
        } => commands::eval(
            &checkpoint,
            config.as_deref(),
            dataset.as_deref(),
            split,
            &label,
            out.as_deref(),
        ),
        Command::Ablate { run, variant, out } => commands::ablate(&run, variant, &out),
        Command::Sweep { run, axis, values, out } => commands::sweep(&run, axis, &values, &out),
        Command::Gradcheck { config, seed, out } => {
            if !commands::gradcheck(config.as_deref(), seed, out.as_deref())? {
                std::process::exit(1);
            }
            Ok(())
        }
        Command::Bench {
            checkpoint,
            seq_len,
            repetitions,
            out,
        } => commands::bench(&checkpoint, seq_len, repetitions, out.as_deref()),
        Command::PlotData { reports, out } => commands::plot_data(&reports, &out),
    }
}
