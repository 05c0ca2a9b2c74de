use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riccati_hjb::cli::{self, EXIT_CONFIG};
use riccati_hjb::market_io::ScenarioConfig;

#[derive(Parser)]
#[command(version, about = "Optimal portfolio strategies from the Riccati-transformed HJB equation")]
struct Args {
    /// Scenario file with key = value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set d=8 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and export the alpha table.
    AlphaTable,
    /// Solve one scenario and export phi, V, psi and weights.
    Solve,
    /// Traveling-wave convergence study.
    Benchmark,
    /// Sweep the intertemporal parameter d.
    Portfolio,
    /// Compare against the direct policy-iteration solver.
    Crosscheck,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let (cfg, base) = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let result = match args.command {
        Command::AlphaTable => cli::run_alpha_table(&cfg, &base, &args.out),
        Command::Solve => cli::run_solve(&cfg, &base, &args.out),
        Command::Benchmark => cli::run_benchmark(&cfg, &args.out),
        Command::Portfolio => cli::run_portfolio(&cfg, &base, &args.out),
        Command::Crosscheck => cli::run_crosscheck(&cfg, &base, &args.out),
    };
    match &result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            if !report.accepted {
                eprintln!("acceptance check failed");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(cli::exit_status(&result) as u8)
}

fn load(args: &Args) -> riccati_hjb::Result<(ScenarioConfig, PathBuf)> {
    let (mut cfg, base) = match &args.config {
        Some(p) => (ScenarioConfig::load(p)?, p.parent().map(PathBuf::from).unwrap_or_default()),
        None => (ScenarioConfig::default(), PathBuf::from(".")),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    Ok((cfg, base))
}
