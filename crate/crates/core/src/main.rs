use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use viscowave::cli::{self, exit, RawConfig, RunConfig};
use viscowave::Result;

#[derive(Parser)]
#[command(
    name = "viscowave",
    version,
    about = "Viscoelastic wave solver with decay verification"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one config and write energy, diagnostics, verdicts, metadata and a plot script.
    Run {
        config: PathBuf,
        /// Output directory; defaults to $VISCOWAVE_OUT/<output.dir or name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 when a check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Run the cross product of the `sweep.*` axes.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time direct against Prony memory on one config.
    Bench {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel analytics.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Embedding constants and potential-well levels.
    Embed { config: PathBuf },
}

#[derive(Subcommand)]
enum KernelAction {
    /// Check (A1) and report I(t), M(δ) and optional (A2)/(A3).
    Check { config: PathBuf },
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(config: &Path, out: Option<PathBuf>, strict: bool) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let dir = cli::resolve_dir(&cfg, out.as_deref());
    let outcome = cli::run_command(&cfg, &dir)?;
    for c in &outcome.analysis.checks {
        println!("{:<20} {}", c.id, c.status.as_str());
    }
    println!("artifacts in {}", dir.display());
    Ok(if (strict || cfg.strict) && !outcome.analysis.all_pass() {
        exit::VERDICT
    } else {
        exit::OK
    })
}

fn dispatch(args: Args) -> Result<i32> {
    match args.command {
        Command::Run {
            config,
            out,
            strict,
        } => run(&config, out, strict),
        Command::Sweep { config, out } => {
            let raw = RawConfig::load(&config)?;
            let base = RunConfig::from_raw(&{
                let mut b = raw.clone();
                for (k, _) in raw.axes() {
                    b.remove(&format!("sweep.{k}"));
                }
                b
            })?;
            let dir = cli::resolve_dir(&base, out.as_deref());
            let s = cli::sweep_command(&raw, &dir)?;
            print!("{}", cli::sweep_csv(&s));
            for m in &s.monotone {
                println!("{m}");
            }
            Ok(if s.errored > 0 {
                exit::RUNTIME
            } else {
                exit::OK
            })
        }
        Command::Bench { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cli::resolve_dir(&cfg, None));
            let report = cli::bench_command(&cfg, Some(&dir))?;
            print_json(&serde_json::to_value(report)?)?;
            Ok(exit::OK)
        }
        Command::Kernel {
            action: KernelAction::Check { config },
        } => {
            print_json(&cli::kernel_check(&RunConfig::load(&config)?)?)?;
            Ok(exit::OK)
        }
        Command::Embed { config } => {
            print_json(&cli::embed_command(&RunConfig::load(&config)?)?)?;
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
