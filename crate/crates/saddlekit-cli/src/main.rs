//! Benchmark CLI: runs parameter sweeps described by a config file, writes
//! iteration tables, per-run convergence histories, and consistency reports,
//! and optionally compares the produced table against a reference.

use clap::{Parser, Subcommand};
use saddlekit::bench::{
    compare_tables, run_experiment, write_outputs, BenchError, ExperimentConfig, IterationTable,
    TableFormat,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bench", about = "Saddle-point preconditioning benchmarks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// INI-style experiment configuration
        config_file: PathBuf,
        /// Override the mesh levels, e.g. `--levels 1,2`
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        /// Output directory (overrides the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Table format: csv or markdown
        #[arg(long)]
        format: Option<String>,
        /// Reference table CSV to compare the produced table against
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Relative per-cell tolerance for --compare
        #[arg(long, default_value_t = 0.25)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config_file, levels, out, format, compare, tol } => {
            match run(config_file, levels, out, format, compare, tol) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(1),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}

fn run(
    config_file: PathBuf,
    levels: Option<Vec<usize>>,
    out: Option<PathBuf>,
    format: Option<String>,
    compare: Option<PathBuf>,
    tol: f64,
) -> Result<bool, BenchError> {
    let text = std::fs::read_to_string(&config_file)?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(levels) = levels {
        if levels.is_empty() {
            return Err(BenchError::Config { line: 0, message: "--levels must not be empty".into() });
        }
        config.levels = levels;
    }
    if let Some(out) = out {
        config.output = Some(out);
    }
    if let Some(format) = format {
        config.format = match format.as_str() {
            "csv" => TableFormat::Csv,
            "markdown" => TableFormat::Markdown,
            other => {
                return Err(BenchError::Config {
                    line: 0,
                    message: format!("unknown format `{other}` (expected csv or markdown)"),
                })
            }
        };
    }

    let outcome = run_experiment(&config)?;
    match config.format {
        TableFormat::Markdown => print!("{}", outcome.table.to_markdown()),
        TableFormat::Csv => print!("{}", outcome.table.to_csv()),
    }
    if let Some(dir) = &config.output {
        write_outputs(&outcome, dir, config.format)?;
        eprintln!("outputs written to {}", dir.display());
    }

    let mut passed = true;
    if let Some(reference_path) = compare {
        let reference_text = std::fs::read_to_string(&reference_path)?;
        let reference = IterationTable::from_csv(&reference_text)?;
        let reference = reference.restrict_levels(&config.levels);
        let diff = compare_tables(&outcome.table, &reference, tol)?;
        eprintln!("comparison against {} at tolerance {tol}:", reference_path.display());
        eprint!("{diff}");
        passed = diff.passes();
        eprintln!("comparison {}", if passed { "PASSED" } else { "FAILED" });
    }
    Ok(passed)
}
