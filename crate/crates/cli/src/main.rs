use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gid_core::pipeline::{run_pipeline, RunConfig, Stage, REPORT};

#[derive(Parser)]
#[command(name = "gid", version, about = "Earnings inequality, dynamics and group-gap pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration (defaults apply when omitted)
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, overriding `paths.output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel
    Gen(Common),
    /// Impute missing hours and education
    Impute(Common),
    /// Analysis sample counts and profiles
    Samples(Common),
    /// Person-year measures and long-term records
    Measures(Common),
    /// Two-way person and firm fixed effects
    Akm(Common),
    /// Cross-sectional, volatility and cohort tables
    Indicators(Common),
    /// Rank-rank mobility profiles
    Mobility(Common),
    /// OLS ladder, quantile regressions and gap decompositions
    Decompose(Common),
    /// Micro-aggregate an output file
    Microagg(Common),
    /// List the produced tables and figures
    Report(Common),
    /// Run every enabled stage
    Run(Common),
    /// Print the default configuration
    DefaultConfig,
}

fn load(common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| format!("config {}: {e}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.paths.output_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, target) = match &cli.command {
        Command::DefaultConfig => {
            return match RunConfig::default().to_toml() {
                Ok(s) => {
                    print!("{s}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("gid: {e}");
                    ExitCode::FAILURE
                }
            };
        }
        Command::Gen(c) => (c, Some(Stage::Gen)),
        Command::Impute(c) => (c, Some(Stage::Impute)),
        Command::Samples(c) => (c, Some(Stage::Samples)),
        Command::Measures(c) => (c, Some(Stage::Measures)),
        Command::Akm(c) => (c, Some(Stage::Akm)),
        Command::Indicators(c) => (c, Some(Stage::Indicators)),
        Command::Mobility(c) => (c, Some(Stage::Mobility)),
        Command::Decompose(c) => (c, Some(Stage::Decompose)),
        Command::Microagg(c) => (c, Some(Stage::Microagg)),
        Command::Report(c) => (c, Some(Stage::Report)),
        Command::Run(c) => (c, None),
    };
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gid: {e}");
            return ExitCode::from(2);
        }
    };
    match run_pipeline(&cfg, target) {
        Ok(m) => {
            for (name, rec) in &m.stages {
                log::info!("{name}: {:?}", rec.status);
            }
            if target == Some(Stage::Report) {
                if let Ok(text) = std::fs::read_to_string(cfg.paths.output_dir.join(REPORT)) {
                    print!("{text}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gid: {e}");
            ExitCode::FAILURE
        }
    }
}
