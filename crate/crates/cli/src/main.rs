//! `torentropy`: entropy tables and balanced-metric checks for Bergman
//! measures on toric Kähler manifolds.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or input error.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::TestFunction;
use config::{CommonArgs, Defaults, RunConfig};

#[derive(Parser)]
#[command(name = "torentropy", version, about = "Bergman measures on toric Kähler manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact entropy of μ_k^x against the asymptotic formula.
    EntropyTable(CommonArgs),
    /// Density-of-states flatness and lattice-path identities for levels 1..=max(k).
    Balanced(CommonArgs),
    /// μ_k^x against the k-th convolution power of μ_1^x, levels 1..=max(k).
    Convolution(CommonArgs),
    /// Minimizer of L and, for Kähler–Einstein metrics, the center-of-mass check.
    Maxent(CommonArgs),
    /// Bernstein approximations B_k f(x) and their O(1/k) convergence.
    Bernstein {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "bump")]
        f: TestFunction,
    },
    /// Gaussian differential entropy −Σ log Q_k.
    GaussEntropy {
        #[command(flatten)]
        common: CommonArgs,
        /// Also report the finite-difference criticality derivative with this step.
        #[arg(long)]
        criticality_step: Option<f64>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn input(message: String) -> Self {
        Self {
            code: 2,
            kind: "input",
            message,
        }
    }
}

impl From<torentropy::Error> for CliError {
    fn from(e: torentropy::Error) -> Self {
        use torentropy::Error as E;
        let numerical = matches!(
            e,
            E::NewtonNonConvergence { .. }
                | E::QuadratureNonConvergence { .. }
                | E::OptimizerNonConvergence { .. }
                | E::NonFiniteBoundarySample { .. }
        );
        Self {
            code: if numerical { 1 } else { 2 },
            kind: if numerical { "numerical" } else { "input" },
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: u8,
    kind: &'a str,
    message: &'a str,
}

fn fail(e: &CliError) -> ExitCode {
    let body = ErrorJson {
        error: ErrorBody {
            code: e.code,
            kind: e.kind,
            message: &e.message,
        },
    };
    eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
    ExitCode::from(e.code)
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("TORENTROPY_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::input(format!("TORENTROPY_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    init_threads()?;
    let (cfg, report) = match &cli.command {
        Command::EntropyTable(a) => {
            let cfg = RunConfig::resolve(a, &Defaults { k: "16..4096*4", x: "", k_quadrature: Some("16..64*4") })?;
            let r = commands::entropy_table(&cfg)?;
            (cfg, r)
        }
        Command::Balanced(a) => {
            let cfg = RunConfig::resolve(a, &Defaults { k: "1..6", x: "grid:5", k_quadrature: None })?;
            let r = commands::balanced(&cfg)?;
            (cfg, r)
        }
        Command::Convolution(a) => {
            let cfg = RunConfig::resolve(a, &Defaults { k: "1..6", x: "grid:5", k_quadrature: None })?;
            let r = commands::convolution(&cfg)?;
            (cfg, r)
        }
        Command::Maxent(a) => {
            let cfg = RunConfig::resolve(a, &Defaults { k: "1", x: "", k_quadrature: None })?;
            let r = commands::maxent(&cfg)?;
            (cfg, r)
        }
        Command::Bernstein { common, f } => {
            let cfg = RunConfig::resolve(common, &Defaults { k: "32,64,128", x: "", k_quadrature: Some("16,32,64") })?;
            let r = commands::bernstein_cmd(&cfg, *f)?;
            (cfg, r)
        }
        Command::GaussEntropy {
            common,
            criticality_step,
        } => {
            if let Some(h) = criticality_step {
                if !(*h > 0.0) {
                    return Err(CliError::input("criticality step must be positive".into()));
                }
            }
            let cfg = RunConfig::resolve(common, &Defaults { k: "1..4", x: "", k_quadrature: None })?;
            let r = commands::gauss_entropy(&cfg, *criticality_step)?;
            (cfg, r)
        }
    };
    println!("{}", commands::emit(&cfg, &report)?);
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&CliError::input(e.to_string().trim().to_string()));
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => fail(&e),
    }
}
