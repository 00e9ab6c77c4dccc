use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use iles_cli::config::{load_config, FiguresSection, MapSpec, Mode, RunConfig};
use iles_cli::run::{commit, execute, verify, Outcome};

/// Iterative learning extremum seeking experiments.
#[derive(Parser)]
#[command(name = "iles", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML or JSON config.
    Run { config: PathBuf },
    /// Run the canonical campaigns and write their plots.
    ReproduceFigures {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a config with all checks enabled plus the matching analysis suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn figures_config(out: PathBuf) -> RunConfig {
    RunConfig {
        mode: Mode::ReproduceFigures,
        output_dir: out,
        map: MapSpec::builtin(),
        ilc: None,
        ilc_beta0: None,
        iles: None,
        sweep_omega: None,
        verify_contraction: None,
        reproduce_figures: Some(FiguresSection::default()),
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    let (name, cfg, outcome) = match cmd {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = execute(&cfg)?;
            ("run", cfg, out)
        }
        Command::ReproduceFigures { out } => {
            let cfg = figures_config(out);
            let res = execute(&cfg)?;
            ("reproduce-figures", cfg, res)
        }
        Command::Verify { config } => {
            let cfg = load_config(&config)?;
            let out = verify(&cfg)?;
            ("verify", cfg, out)
        }
    };
    commit(&cfg.output_dir, name, &cfg, &outcome)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for failed checks
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(out) => {
            for c in &out.checks {
                let mark = if c.passed { "pass" } else { "FAIL" };
                println!("{mark} {}: {}", c.name, c.detail);
            }
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
