//! `paramodel` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use paramodel::config::{self, Overrides, RunConfig, BUILTINS};
use paramodel::runner::{execute, ExitStatus};
use paramodel::DecayClock;

#[derive(Parser, Debug)]
#[command(name = "paramodel", version, about = "Model-free para-model control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a built-in or file-defined scenario and write its trace.
    Run(Box<RunArgs>),
    /// List the built-in runs.
    List,
    /// Print a built-in run as a self-contained configuration file.
    Show { name: String },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file (same as --config).
    #[arg(conflicts_with_all = ["builtin", "config"])]
    path: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    builtin: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep every M-th iteration in the trace.
    #[arg(long, value_name = "M")]
    decimate: Option<usize>,
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    kp: Option<f64>,
    #[arg(long)]
    ki: Option<f64>,
    #[arg(long)]
    k_alpha: Option<f64>,
    #[arg(long)]
    k_beta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    psi0: Option<f64>,
    /// Gain stagger ratio in (0, 1].
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum)]
    decay_clock: Option<Clock>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Clock {
    Time,
    Index,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            output: self.out.clone(),
            decimate: self.decimate,
            tol: self.tol,
            horizon: self.horizon,
            kp: self.kp,
            ki: self.ki,
            k_alpha: self.k_alpha,
            k_beta: self.k_beta,
            dt: self.dt,
            psi0: self.psi0,
            stagger_rho: self.rho,
            tau: self.tau,
            decay_clock: self.decay_clock.map(|c| match c {
                Clock::Time => DecayClock::Time,
                Clock::Index => DecayClock::Index,
            }),
        }
    }

    fn load(&self) -> paramodel::Result<RunConfig> {
        let overrides = self.overrides();
        match (&self.builtin, self.config.as_ref().or(self.path.as_ref())) {
            (Some(name), _) => config::builtin_with(name, &overrides),
            (None, Some(path)) => config::load_config(path, &overrides),
            (None, None) => config::builtin_with("fig4", &overrides),
        }
    }
}

fn run(args: &RunArgs) -> ExitStatus {
    let cfg = match args.load() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::for_error(&e);
        }
    };
    match execute(&cfg) {
        Ok(outcome) => {
            println!("{outcome}");
            if let Some(path) = &cfg.output {
                println!(
                    "  trace written to {} (every {} iterations)",
                    path.display(),
                    cfg.decimate
                );
            }
            outcome.exit_status()
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::for_error(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run(args) => run(&args),
        Command::List => {
            for (name, about) in BUILTINS {
                println!("{name:<10} {about}");
            }
            ExitStatus::Converged
        }
        Command::Show { name } => match RunConfig::builtin(&name) {
            Some(cfg) => {
                print!("{}", cfg.to_toml());
                ExitStatus::Converged
            }
            None => {
                eprintln!("error: unknown builtin `{name}`");
                ExitStatus::ConfigError
            }
        },
    };
    ExitCode::from(status.code())
}
