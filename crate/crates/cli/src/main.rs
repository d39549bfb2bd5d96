use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbje_cli::error::{io_err, EXIT_OK};
use tbje_cli::evaluate::{evaluate, run_checkpoints};
use tbje_cli::gradcheck::{format_report, verdict, GradcheckOptions};
use tbje_cli::synth::{synth_bundle, SynthOptions};
use tbje_cli::train::TrainOptions;
use tbje_cli::{extract, gradcheck, sweep, train, CliError, Result, RunConfig};
use tbje_core::Modality;

/// Transformer-based joint encoding for multimodal sentiment and emotion
/// classification.
///
/// Exit codes: 0 success, 2 usage, 3 configuration or incompatible inputs,
/// 4 I/O or file format, 5 numeric failure (divergence, failed gradient
/// check).
#[derive(Parser)]
#[command(name = "tbje", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Run seed; replaces `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset bundle from a CSV manifest.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pretrained word vectors, one `token v1 .. v300` line per word.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Write a separable synthetic bundle.
    SynthBundle {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "L+A+V")]
        modalities: String,
        #[arg(long, default_value_t = 32)]
        examples: usize,
        #[arg(long, default_value_t = 4)]
        length: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
    },
    /// Train an ensemble on a bundle.
    Train {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the state files in the output directory.
        #[arg(long)]
        resume: bool,
        /// Halt after this many epochs in this invocation.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Score checkpoints on a bundle split.
    Evaluate {
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Checkpoint files; alternatively `--run`.
        #[arg(long, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        /// Training output directory whose member checkpoints to use.
        #[arg(long, conflicts_with = "checkpoints")]
        run: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of a toy model.
    Gradcheck {
        #[arg(long, default_value = "L+A")]
        modalities: String,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 3)]
        examples: usize,
        #[arg(long, hide = true)]
        fault_inject: bool,
    },
    /// Train and score one ensemble per encoder depth.
    SweepBlocks {
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Comma-separated depths.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,6")]
        blocks: Vec<usize>,
        /// Also write the TSV table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value
        .or_else(|| fallback.clone())
        .ok_or_else(|| tbje_core::Error::Config(format!("{flag} is required (or set it under [paths])")).into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), &cli.global.overrides, cli.global.seed)?;
    let seed = cfg.train.seed;
    match cli.command {
        Command::ExtractFeatures { manifest, out, embeddings } => {
            let out = required(out, &cfg.paths.out, "--out")?;
            let embeddings = embeddings.or_else(|| cfg.paths.embeddings.clone());
            let (_, report) = extract::extract_features(&manifest, &out, embeddings.as_deref(), &cfg.features)?;
            eprintln!("{}", report.summary());
        }
        Command::SynthBundle { out, modalities, examples, length, width, noise } => {
            let opts = SynthOptions { modalities: Modality::parse_list(&modalities)?, examples, length, width, noise, seed };
            synth_bundle(&out, &opts)?;
        }
        Command::Train { bundle, out, resume, stop_after } => {
            let bundle = required(bundle, &cfg.paths.bundle, "--bundle")?;
            let out = required(out, &cfg.paths.out, "--out")?;
            let summary = train::train(&bundle, &out, &cfg, &TrainOptions { resume, stop_after })?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
        }
        Command::Evaluate { bundle, checkpoints, run, split, report } => {
            let bundle = required(bundle, &cfg.paths.bundle, "--bundle")?;
            let checkpoints = match run {
                Some(dir) => run_checkpoints(&dir)?,
                None => checkpoints,
            };
            let r = evaluate(&bundle, &checkpoints, &split)?;
            let text = r.to_json();
            print!("{text}");
            if let Some(p) = report {
                write_text(&p, &text)?;
            }
        }
        Command::Gradcheck { modalities, blocks, hidden, heads, examples, fault_inject } => {
            let opts = GradcheckOptions {
                modalities: Modality::parse_list(&modalities)?,
                blocks,
                hidden,
                heads,
                examples,
                seed,
                fault_inject,
            };
            let report = gradcheck::run(&opts)?;
            print!("{}", format_report(&report));
            verdict(&report)?;
        }
        Command::SweepBlocks { bundle, blocks, out } => {
            let bundle = required(bundle, &cfg.paths.bundle, "--bundle")?;
            let rows = sweep::sweep_blocks(&bundle, &cfg, &blocks)?;
            let table = sweep::format_table(&rows);
            print!("{table}");
            if let Some(p) = out {
                write_text(&p, &table)?;
            }
        }
        Command::PrintConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code() as u8
}
