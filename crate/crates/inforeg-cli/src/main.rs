//! Configuration-driven experiment runner.
//!
//! Subcommands: `run` executes a config (expanding any sweep) into an output
//! tree; `compare` tabulates finished runs; `plotdata` emits tidy CSV for
//! plotting; `diagnose` runs the numerical verification checks over a run.
//!
//! Exit codes: 0 success, 2 configuration error, 3 ingestion error,
//! 4 numeric failure, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use inforeg::config::ExperimentConfig;
use inforeg::experiment::{self, DiagnoseCheck, Overrides, PlotKind};

#[derive(Parser)]
#[command(name = "inforeg", version, about = "Multimodal information-regulation training lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute all runs of an experiment config.
    Run {
        /// Path to the experiment TOML.
        config: PathBuf,
        /// Override the training seed (collapses any seed sweep).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides config and INFOREG_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweep execution (overrides config and
        /// INFOREG_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Tabulate final-epoch metrics of two or more finished runs.
    Compare {
        /// Run directories (each containing run_meta.json and metrics.csv).
        dirs: Vec<PathBuf>,
        /// Where to write the comparison CSV.
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
    /// Emit tidy plot data (series,x,y) from a finished run.
    Plotdata {
        dir: PathBuf,
        /// One of: traces, accuracy, cosine, gap.
        #[arg(long)]
        kind: String,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a numerical verification check over a finished run.
    Diagnose {
        dir: PathBuf,
        /// One of: orthogonality, equivalence, descent.
        #[arg(long)]
        check: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> inforeg::Result<()> {
    match cli.command {
        Command::Run { config, seed, out, workers } => {
            let cfg = ExperimentConfig::load(&config)?;
            let config_dir = config
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            let overrides = Overrides { out, seed, workers };
            let (resolved, plans) = experiment::plan(&cfg, &overrides);
            println!("sweep: {} run(s)", plans.len());
            for p in &plans {
                println!("  {}", p.run_id);
            }
            let _ = resolved;
            let summary = experiment::execute(&cfg, &config_dir, &overrides)?;
            println!("wrote {} run(s) under {}", summary.run_ids.len(), summary.out_dir.display());
            Ok(())
        }
        Command::Compare { dirs, out } => {
            let table = experiment::compare(&dirs)?;
            print!("{}", table.render_text());
            std::fs::write(&out, table.to_csv())?;
            println!("comparison written to {}", out.display());
            Ok(())
        }
        Command::Plotdata { dir, kind, out } => {
            let kind = PlotKind::parse(&kind)?;
            let csv = experiment::plotdata(&dir, kind)?;
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Diagnose { dir, check } => {
            let check = DiagnoseCheck::parse(&check)?;
            let summary = experiment::diagnose(&dir, check)?;
            println!("{summary}");
            Ok(())
        }
    }
}
