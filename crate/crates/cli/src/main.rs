//! `nfp`: simulation and analysis front end.
//!
//! Exit codes: 0 success, 1 validation failure (bad config, violated
//! hypothesis or failed check), 2 runtime error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nfp", version, about = "Nonlinear Fokker-Planck simulator and entropy-dissipation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct ReportOut {
    /// Write the JSON report here instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver; writes <prefix>_diagnostics.csv, <prefix>_summary.json
    /// and <prefix>_config.toml into the output directory.
    Simulate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Run up to this many configs in parallel.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
    },
    /// Solve for the stationary density and its constant C.
    Equilibrium {
        config: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Fit ln D = ln A − σt on a diagnostics CSV.
    DecayFit {
        csv: PathBuf,
        /// Fit window; defaults to the second half of the resolved run.
        #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
        window: Option<Vec<f64>>,
        /// Relative D level treated as roundoff when choosing the default window.
        #[arg(long, default_value_t = 1e-18)]
        floor: f64,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Refinement study of the energy identity and the d²F/dt² decomposition.
    IdentityCheck {
        config: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Threshold of g' ≤ −C7 g + C8 g^{3/2} + C9 g³ and a numerical check of the bound.
    Gronwall {
        /// Read coefficients from the [gronwall] section; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        c7: Option<f64>,
        #[arg(long)]
        c8: Option<f64>,
        #[arg(long)]
        c9: Option<f64>,
        #[arg(long, num_args = 1..)]
        g0: Option<Vec<f64>>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        rtol: Option<f64>,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Estimate the Sobolev constant and test the cubic interpolation inequality.
    InterpCheck {
        config: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Check the standing assumptions; with --run also the hypotheses along a run.
    Validate {
        config: PathBuf,
        #[arg(long)]
        run: bool,
        #[command(flatten)]
        out: ReportOut,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { configs, jobs } => commands::simulate(&configs, jobs),
        Command::Equilibrium { config, out } => commands::equilibrium(&config, &out),
        Command::DecayFit { csv, window, floor, out } => {
            commands::decay_fit(&csv, window.map(|w| (w[0], w[1])), floor, &out)
        }
        Command::IdentityCheck { config, out } => commands::identity_check(&config, &out),
        Command::Gronwall { config, c7, c8, c9, g0, t_end, rtol, out } => {
            commands::gronwall(config.as_deref(), commands::GronwallOverrides { c7, c8, c9, g0, t_end, rtol }, &out)
        }
        Command::InterpCheck { config, out } => commands::interp_check(&config, &out),
        Command::Validate { config, run, out } => commands::validate(&config, run, &out),
    };
    match result {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::CheckFailed(msg)) => {
            eprintln!("nfp: check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("nfp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
