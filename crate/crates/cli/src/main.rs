use anyhow::Result;
use clap::{Parser, Subcommand};
use cmaf_cli::commands::{self, NO_UNIQUENESS};
use cmaf_cli::config::RunConfig;
use cmaf_cli::{exit_code, report, EXIT_NUMERIC, EXIT_OK};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cmaf", version, about = "Complex Monge-Ampère flow laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Archive directory; defaults to the config's `out` or out/<label>
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checks to run after the flow, in addition to those in the config
    #[arg(long = "check")]
    checks: Vec<String>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write its archive
    Run(RunArgs),
    /// Integrate a nef-class scenario with its shift family
    Nef(RunArgs),
    /// Run checks over stored archives
    Verify {
        /// Archive directories; pair checks use the second as partner
        #[arg(required = true)]
        archives: Vec<PathBuf>,
        #[arg(long = "check", required = true)]
        checks: Vec<String>,
        /// Configuration to use instead of the one stored in the archive
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report directory; defaults to <archive>/reports
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a per-step quantity as CSV
    Series {
        archive: PathBuf,
        #[arg(long)]
        quantity: String,
        /// Member archive (cascade level, shift, partner)
        #[arg(long)]
        member: Option<String>,
        /// Output file; defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the decreasing mollification ladder of the initial data
    Regularize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>, checks: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.checks.extend(checks.iter().cloned());
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(args) | Command::Nef(args) => {
            let cfg = load(&args.config, args.seed, &args.checks)?;
            let out = args.out.unwrap_or_else(|| commands::default_out(&cfg, &args.config));
            let result = commands::cmd_run(&cfg, &out)?;
            for n in &result.manifest.notices {
                if n == NO_UNIQUENESS {
                    eprintln!("*** {n} ***");
                } else {
                    eprintln!("notice: {n}");
                }
            }
            println!("archive {} (config {})", out.display(), result.manifest.config_hash);
            report::print_summary(&result.reports);
            Ok(if result.failed() > 0 { EXIT_NUMERIC } else { EXIT_OK })
        }
        Command::Verify { archives, checks, config, out, seed } => {
            let cfg = config.map(|p| load(&p, seed, &[])).transpose()?;
            let (reports, dir) = commands::cmd_verify(&archives, &checks, cfg.as_ref(), out.as_deref())?;
            report::print_summary(&reports);
            println!("reports in {}", dir.display());
            Ok(if reports.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_NUMERIC })
        }
        Command::Series { archive, quantity, member, out } => {
            match out {
                Some(p) => {
                    let mut f = std::fs::File::create(&p)?;
                    commands::cmd_series(&archive, member.as_deref(), &quantity, &mut f)?;
                }
                None => {
                    commands::cmd_series(&archive, member.as_deref(), &quantity, &mut std::io::stdout())?
                }
            }
            Ok(EXIT_OK)
        }
        Command::Regularize { config, out, seed } => {
            let cfg = load(&config, seed, &[])?;
            let out = out.unwrap_or_else(|| commands::default_out(&cfg, &config).join("ladder"));
            commands::cmd_regularize(&cfg, &out)?;
            println!("ladder in {}", out.display());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
