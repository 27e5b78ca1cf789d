use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlch_cli::commands::{self, parse_axis, resolve_threads};
use nlch_cli::{load_config, CliError, Result};

#[derive(Parser)]
#[command(name = "nlch", version, about = "Nonlocal Cahn-Hilliard simulator and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to NLCH_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured model and write diagnostics.
    Run(Common),
    /// Run a verification preset and print PASS/FAIL lines.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Preset name (overrides verify.preset).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Solve the stationary problem from the configured initial data.
    Equilibrate(Common),
    /// Run one job per value of a configuration key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`
        #[arg(long)]
        axis: String,
    },
    /// Dump a snapshot file as CSV.
    Export {
        /// Snapshot file.
        input: PathBuf,
        /// CSV destination (defaults to the input path with a .csv extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_dir(common: &Common, fallback: &Path) -> PathBuf {
    common.out.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn init_global_pool(threads: Option<usize>) -> Result<()> {
    if let Some(n) = resolve_threads(threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load_config(&common.config)?;
            let out = output_dir(&common, &cfg.output_dir);
            let traj = commands::run_command(&cfg, &out)?;
            let last = traj.final_snapshot();
            println!("{} at t = {} after {} steps; output in {}", traj.status.as_str(), last.t, last.step, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { common, preset } => {
            init_global_pool(common.threads)?;
            let cfg = load_config(&common.config)?;
            let preset = preset
                .or_else(|| cfg.preset.clone())
                .ok_or_else(|| CliError::Usage("no preset given (use --preset or verify.preset)".into()))?;
            let report = commands::verify(&cfg, &preset)?;
            print!("{}", report.text());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Equilibrate(common) => {
            let cfg = load_config(&common.config)?;
            let out = output_dir(&common, &cfg.output_dir);
            let r = commands::equilibrate(&cfg, &out)?;
            println!(
                "mu_star = {}\nresidual = {:e}\niterations = {}\nconverged = {}",
                r.mu_star, r.residual, r.iterations, r.converged
            );
            Ok(if r.converged { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Sweep { common, axis } => {
            let cfg = load_config(&common.config)?;
            let (key, values) = parse_axis(&axis)?;
            let out = output_dir(&common, &cfg.output_dir);
            let threads = resolve_threads(common.threads)?;
            let jobs = commands::sweep(&cfg, &key, &values, &out, threads)?;
            let mut ok = true;
            for j in &jobs {
                println!("job {} {key}={}: {}", j.index, j.value, j.status);
                if let Some(m) = &j.message {
                    eprintln!("  {m}");
                    ok = false;
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Export { input, out } => {
            let out = out.unwrap_or_else(|| input.with_extension("csv"));
            commands::export(&input, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
