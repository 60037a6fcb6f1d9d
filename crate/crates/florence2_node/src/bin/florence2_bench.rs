//! Throughput harness CLI.
//!
//! `run` executes one benchmark cell from a TOML config and writes the
//! report JSON; `table` renders one or more reports as an aligned text
//! table and CSV, optionally overlaying the published reference rows.

use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use florence2_node::bench::{emit_table_csv, emit_table_text, run_bench, BenchConfig, BenchReport};

#[derive(Parser, Debug)]
#[command(name = "florence2_bench", about = "Continuous-mode throughput benchmark")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one benchmark cell.
    Run {
        /// Cell configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Where to write the report JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render report files as a table.
    Table {
        /// Report JSON files produced by `run`.
        reports: Vec<PathBuf>,
        /// Overlay the published reference rows.
        #[arg(long, default_value_t = false)]
        reference: bool,
        /// Also write CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match Args::parse().command {
        Command::Run { config, out } => {
            let cfg = BenchConfig::from_path(&config)?;
            let report = run_bench(&cfg)?;
            let json = report.to_json();
            match out {
                Some(path) => {
                    std::fs::write(&path, json.as_bytes())
                        .with_context(|| format!("writing {}", path.display()))?;
                    eprintln!(
                        "cell done: {} on {} -> {} / {} / {} fps",
                        report.model_id,
                        report.device,
                        report.fps_min,
                        report.fps_avg,
                        report.fps_max
                    );
                }
                None => println!("{json}"),
            }
        }
        Command::Table {
            reports,
            reference,
            csv,
        } => {
            if reports.is_empty() && !reference {
                anyhow::bail!("pass at least one report file (or --reference)");
            }
            let mut parsed: Vec<BenchReport> = Vec::new();
            for path in &reports {
                let raw = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parsed.push(BenchReport::from_json(&raw)?);
            }
            print!("{}", emit_table_text(&parsed, reference));
            if let Some(path) = csv {
                std::fs::write(&path, emit_table_csv(&parsed, reference))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
