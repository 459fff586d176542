use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use excessmort::calendar::YearMonth;
use excessmort::cli::{
    cmd_converge, cmd_crossseed, cmd_horizons, cmd_ingest, cmd_pipeline, cmd_synth, CliError, LevelShift, RunConfig,
    SyntheticSource,
};
use excessmort::ingest::{SuppressionMode, SuppressionPolicy};
use excessmort_server::Api;

#[derive(Parser)]
#[command(name = "excessmort", version, about = "Counterfactual mortality projection and excess-death estimates")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trials and grid cells.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Base seed; overrides the config's `base_seed` (the fixture seed for `synth`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suppression {
    Fail,
    Zero,
    Midpoint,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a WONDER export into monthly series CSVs.
    Ingest {
        export: PathBuf,
        /// Stratification columns to read, e.g. `--dimension Sex`.
        #[arg(long = "dimension")]
        dimensions: Vec<String>,
        #[arg(long, value_enum, default_value = "fail")]
        suppression: Suppression,
    },
    /// Write a synthetic trend-plus-seasonality fixture.
    Synth {
        #[arg(long, default_value_t = 108)]
        months: usize,
        /// First month of the level shift, e.g. 2020-01.
        #[arg(long, requires = "shift")]
        shift_from: Option<YearMonth>,
        #[arg(long)]
        shift: Option<f64>,
    },
    /// Tune, retrain, project and report.
    Pipeline,
    /// Metric convergence over increasing trial counts.
    Converge,
    /// Metric spread across base seeds.
    Crossseed,
    /// Projection errors at increasing horizons.
    Horizons,
    /// Serve the HTTP API over the runs in `--out`.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Allowed CORS origin (any when omitted).
        #[arg(long)]
        origin: Option<String>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs --config <path>".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out_dir = || cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Ingest {
            export,
            dimensions,
            suppression,
        } => {
            let mode = match suppression {
                Suppression::Fail => SuppressionMode::Fail,
                Suppression::Zero => SuppressionMode::Zero,
                Suppression::Midpoint => SuppressionMode::Midpoint,
            };
            let summary = cmd_ingest(export, dimensions, SuppressionPolicy { mode }, &out_dir())?;
            println!("{summary}");
            for (label, reason) in &summary.skipped {
                eprintln!("skipped {label}: {reason}");
            }
        }
        Command::Synth {
            months,
            shift_from,
            shift,
        } => {
            let source = SyntheticSource {
                n_months: *months,
                seed: cli.seed.unwrap_or(0),
                level_shift: shift_from.zip(*shift).map(|(from, amount)| LevelShift { from, amount }),
                ..SyntheticSource::default()
            };
            let out = cmd_synth(&source, &out_dir())?;
            println!("{} months -> {}, {}", out.months, out.csv.display(), out.export.display());
        }
        Command::Pipeline => {
            let o = cmd_pipeline(&load(cli)?)?;
            println!("{}", o.run_dir.display());
            for (family, e) in &o.excess {
                println!("{family}: cumulative excess {:.1}", e.cumulative);
            }
        }
        Command::Converge => {
            let (path, curve) = cmd_converge(&load(cli)?)?;
            match curve.first_converged {
                Some(n) => println!("converged at {n} trials; {}", path.display()),
                None => println!("not converged; {}", path.display()),
            }
        }
        Command::Crossseed => {
            let (path, _) = cmd_crossseed(&load(cli)?)?;
            println!("{}", path.display());
        }
        Command::Horizons => {
            let (path, _) = cmd_horizons(&load(cli)?)?;
            println!("{}", path.display());
        }
        Command::Serve { port, origin } => {
            let api = Arc::new(Api::new(out_dir(), cli.workers.unwrap_or(1)));
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&out_dir(), e))?;
            runtime
                .block_on(excessmort_server::serve(api, *port, origin.as_deref()))
                .map_err(|e| CliError::io(&out_dir(), e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
