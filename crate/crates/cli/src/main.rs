mod registry;
mod run;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use weylforge::{GeomError, StarConvention};

#[derive(Parser)]
#[command(name = "weylforge", version, about = "Pointwise verification of Einstein–Weyl and selfdual metric families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a family's check suite and write a JSON report.
    Verify(VerifyArgs),
    /// Run the check suite over a parameter grid and write CSV.
    Scan(ScanArgs),
    /// Write congruence data (point, direction, τ, κ) as CSV.
    EmitCongruence(EmitArgs),
    /// List families, their parameters and checks.
    Families,
}

#[derive(Args, Clone)]
pub struct Common {
    #[arg(long)]
    family: String,
    /// Family parameter as key=value; repeatable.
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Tolerance override as check=value; repeatable.
    #[arg(long = "tol", value_name = "CHECK=TOL")]
    tols: Vec<String>,
    #[arg(long, default_value = "tilde")]
    convention: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Report path; stdout if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Grid axis as key=start:stop:steps; repeatable.
    #[arg(long = "grid", value_name = "K=START:STOP:STEPS")]
    grid: Vec<String>,
    /// CSV path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmitArgs {
    #[arg(long)]
    family: String,
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
    #[arg(long, default_value = "canonical")]
    congruence: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit-code classes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Failure {
        match e {
            GeomError::Parse { .. } | GeomError::Invalid(_) | GeomError::Precondition(_) | GeomError::Ineligible(_) | GeomError::Domain(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Usage(format!("i/o error: {}", e))
    }
}

pub fn parse_convention(s: &str) -> Result<StarConvention, Failure> {
    s.parse().map_err(|e: GeomError| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = run::init_pool().and_then(|_| match cli.command {
        Command::Verify(a) => run::verify(&a.common, a.report.as_deref()),
        Command::Scan(a) => run::scan(&a.common, &a.grid, a.out.as_deref()),
        Command::EmitCongruence(a) => run::emit(&a.family, &a.params, &a.congruence, a.samples, a.seed, a.out.as_deref()),
        Command::Families => run::list_families(),
    });
    match out {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Numerical(m) => m.clone(),
            };
            eprintln!("error: {}", msg);
            ExitCode::from(f.code())
        }
    }
}
