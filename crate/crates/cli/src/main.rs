//! `skybeam` — command-line front end for the beam-prediction pipeline.
//!
//! Subcommands cover the full workflow: `generate` synthesizes a scenario
//! dataset CSV, `train` fits a beam classifier and writes a checkpoint,
//! `evaluate` scores a checkpoint, `compare` runs the four-way feature-set
//! experiment, and `ingest` converts an externally recorded CSV into the
//! canonical schema.
//!
//! The effective configuration is built in layers: built-in defaults, then
//! the `--config` file, then each `--set key=value` override in order, then
//! the shortcut flags (`--seed`, `--split`, `--q`, `--feature-set`). Every
//! override key is listed at the bottom of `--help`.
//!
//! Exit codes: 0 success, 2 configuration error (including usage errors),
//! 3 data error (missing or malformed inputs), 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use skybeam_core::config::{self, AppConfig};
use skybeam_core::pipeline::{self, DatasetManifest};
use skybeam_core::{Error, Report};

#[derive(Debug, Parser)]
#[command(
    name = "skybeam",
    version,
    about = "Synthesize drone flight datasets, train mmWave beam classifiers, and compare sensor feature sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by every subcommand.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML config file, merged over the built-in defaults
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; every component RNG is derived from it
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,

    /// Override one config key, e.g. --set train.epochs=10 (repeatable;
    /// unknown keys are an error — see the key list under --help)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Train/test split strategy (shortcut for dataset.split)
    #[arg(long, value_name = "KIND", value_parser = ["random", "temporal"])]
    split: Option<String>,

    /// Codebook size used for labels (shortcut for the q key)
    #[arg(long, value_name = "32|64")]
    q: Option<u64>,

    /// Feature columns fed to the classifier (shortcut for dataset.feature_set)
    #[arg(
        long,
        value_name = "NAME",
        value_parser = [
            "position",
            "position-height",
            "position-height-distance",
            "visual",
        ]
    )]
    feature_set: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the configured flight scenario into dataset.csv + a manifest
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for dataset.csv and dataset.json
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Train a classifier on a dataset CSV and write checkpoint.json + history.csv
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset CSV in the canonical schema
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Output directory for checkpoint.json and history.csv
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Score a checkpoint on its dataset and write report.json + report.csv
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset CSV the checkpoint was trained from
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Checkpoint written by `train`
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Output directory for report.json and report.csv
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Train all four feature sets on one split and write a comparison report
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset CSV to reuse; omitted = synthesize from the config
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Output directory for report.json and report.csv
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Convert an external CSV to the canonical schema via a column mapping
    Ingest {
        /// Externally recorded CSV
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// TOML column mapping; omitted = columns already use canonical names
        #[arg(long, value_name = "PATH")]
        mapping: Option<PathBuf>,
        /// Output directory for the converted dataset.csv
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

/// Build the effective config: defaults ← file ← --set overrides ← shortcuts.
fn build_config(args: &ConfigArgs) -> Result<AppConfig, Error> {
    let mut tree = match &args.config {
        Some(path) => config::load_config(path)?,
        None => config::default_config_value(),
    };
    for entry in &args.set {
        let (key, value) = entry.split_once('=').ok_or_else(|| {
            Error::config(format!("--set expects KEY=VALUE, got `{entry}`"))
        })?;
        config::apply_override(&mut tree, key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        config::apply_override(&mut tree, "master_seed", &seed.to_string())?;
    }
    if let Some(split) = &args.split {
        config::apply_override(&mut tree, "dataset.split", split)?;
    }
    if let Some(q) = args.q {
        config::apply_override(&mut tree, "q", &q.to_string())?;
    }
    if let Some(fs) = &args.feature_set {
        config::apply_override(&mut tree, "dataset.feature_set", fs)?;
    }
    config::finalize(tree)
}

fn print_provenance(cfg: &AppConfig) {
    println!("config_hash: {}", cfg.hash());
    println!("master_seed: {}", cfg.master_seed);
}

fn print_report_summary(report: &Report) {
    let ratios: Vec<String> = report
        .topk
        .iter()
        .map(|entry| format!("top-{} {:.4}", entry.k, entry.accuracy))
        .collect();
    println!(
        "{:<26} n_test {:>6}  {}",
        report.feature_set.to_string(),
        report.n_test,
        ratios.join("  ")
    );
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Generate { cfg, out } => {
            let cfg = build_config(&cfg)?;
            let outputs = pipeline::run_generate::<f64>(&cfg, &out)?;
            let manifest: DatasetManifest = serde_json::from_slice(
                &std::fs::read(&outputs.manifest_json)
                    .map_err(|e| Error::data(format!("cannot read manifest: {e}")))?,
            )
            .map_err(|e| Error::data(format!("cannot parse manifest: {e}")))?;
            print_provenance(&cfg);
            println!("rows: {}", manifest.rows);
            println!("wrote {}", outputs.dataset_csv.display());
            println!("wrote {}", outputs.manifest_json.display());
        }
        Command::Train { cfg, data, out } => {
            let cfg = build_config(&cfg)?;
            let outputs = pipeline::run_train::<f64>(&cfg, &data, &out)?;
            print_provenance(&cfg);
            println!("final_loss: {:.6}", outputs.final_loss);
            println!("wrote {}", outputs.checkpoint_json.display());
            println!("wrote {}", outputs.history_csv.display());
        }
        Command::Evaluate {
            cfg,
            data,
            checkpoint,
            out,
        } => {
            let cfg = build_config(&cfg)?;
            let outputs = pipeline::run_evaluate::<f64>(&cfg, &data, &checkpoint, &out)?;
            for report in &outputs.report.reports {
                print_report_summary(report);
            }
            println!("wrote {}", outputs.report_json.display());
            println!("wrote {}", outputs.report_csv.display());
        }
        Command::Compare { cfg, data, out } => {
            let cfg = build_config(&cfg)?;
            let outputs = pipeline::run_compare::<f64>(&cfg, data.as_deref(), &out)?;
            print_provenance(&cfg);
            for report in &outputs.report.reports {
                print_report_summary(report);
            }
            println!("wrote {}", outputs.report_json.display());
            println!("wrote {}", outputs.report_csv.display());
        }
        Command::Ingest {
            input,
            mapping,
            out,
        } => {
            let csv_out = out.join("dataset.csv");
            let (rows, skipped) =
                pipeline::run_ingest::<f64>(&input, mapping.as_deref(), &csv_out)?;
            println!("rows: {rows}");
            println!("skipped_rows: {skipped}");
            println!("wrote {}", csv_out.display());
        }
    }
    Ok(())
}

/// Appendix for --help: every config key reachable via --set, with defaults.
fn override_key_help() -> String {
    let mut help = String::from("Config keys for --set KEY=VALUE (defaults shown):\n");
    for (key, default) in config::enumerate_keys() {
        help.push_str(&format!("  {key} = {default}\n"));
    }
    help.push_str("\nSeed derivation: component RNG seeds are derived from master_seed,\nso one --seed value pins the whole run.");
    help
}

fn main() -> ExitCode {
    let help = override_key_help();
    let command = Cli::command()
        .after_help(help.clone())
        .mut_subcommands(|sub| sub.after_help(help.clone()));
    // Usage errors and --help/--version exit here (codes 2 and 0).
    let matches = command.get_matches();
    let cli = Cli::from_arg_matches(&matches).expect("matches were built from Cli's own command");
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
