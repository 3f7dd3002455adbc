//! `ks-selfsim`: command-line driver for the self-similar profile pipeline.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 when a computation fails
//! or a verification check misses its threshold.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use commands::SimParams;
use config::{RunConfig, UsageError};
use output::Sink;

#[derive(Parser)]
#[command(name = "ks-selfsim", version, about = "Backward self-similar blow-up profiles for radial Keller-Segel")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// Space dimension, 3 to 9
    #[arg(long, global = true)]
    dim: Option<u32>,
    /// Matching radius r0 in (0, 1)
    #[arg(long, global = true)]
    r0: Option<f64>,
    /// Outer radius for steady and exterior shots
    #[arg(long, global = true)]
    rmax: Option<f64>,
    /// ODE tolerance for steady state, fundamental solutions and shots
    #[arg(long = "tol-ode", global = true)]
    tol_ode: Option<f64>,
    /// Matching tolerance for the epsilon solve and root refinement
    #[arg(long = "tol-match", global = true)]
    tol_match: Option<f64>,
    /// Number of profiles
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Fixed scan length in mismatch periods (default: extend until n roots)
    #[arg(long = "scan-periods", global = true)]
    scan_periods: Option<f64>,
    /// Output directory, or `-` for the primary artifact on stdout
    #[arg(long, global = true)]
    out: Option<String>,
    /// key=value configuration file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state Q and reduced mass Qbar with tail fits
    Steady,
    /// Fundamental solutions and Wronskian reports
    Fundamental,
    /// d = 3 cross-validation of u1 against the confluent hypergeometric route
    KummerCheck,
    /// Single exterior shot
    ShootExt {
        #[arg(long, allow_hyphen_values = true)]
        eps: f64,
    },
    /// Single interior shot at scale lambda
    ShootInt {
        #[arg(long)]
        lambda: f64,
    },
    /// Mismatch scan and refinement of mu_n
    Match,
    /// Assemble and verify the profiles U_n
    Profile,
    /// Residual oracle on the explicit solutions
    VerifyExplicit,
    /// Exact blow-up solutions and L^p distances to the limit
    Evolve {
        #[arg(long, default_value_t = 1.0)]
        t_blowup: f64,
    },
    /// Method-of-lines run from U_1 data
    Sim {
        #[arg(long, default_value_t = ks_selfsim::evolution::SIM_CELLS)]
        cells: usize,
        #[arg(long, default_value_t = 0.5)]
        t_end: f64,
    },
    /// Full pipeline
    All,
}

fn build_config(flags: &Flags) -> Result<RunConfig, UsageError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &flags.config {
        cfg.load_file(path)?;
    }
    macro_rules! over {
        ($($f:ident => $k:ident),*) => { $(if let Some(v) = flags.$f.clone() { cfg.$k = v; })* };
    }
    over!(dim => dim, r0 => r0, rmax => r_max, tol_ode => tol_ode, tol_match => tol_match, n => n, out => out);
    if flags.scan_periods.is_some() {
        cfg.scan_periods = flags.scan_periods;
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("KS_SELFSIM_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| UsageError(format!("KS_SELFSIM_THREADS must be an integer, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn usage(e: UsageError) -> ExitCode {
    eprintln!("usage error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let cfg = match build_config(&cli.flags) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let dim = match cfg.validate() {
        Ok(d) => d,
        Err(e) => return usage(e),
    };
    if let Err(e) = init_threads() {
        return usage(e);
    }
    let mut sink = Sink::new(&cfg.out);
    let res = match cli.command {
        Command::Steady => commands::steady(&cfg, dim, &mut sink),
        Command::Fundamental => commands::fundamental(&cfg, dim, &mut sink),
        Command::KummerCheck => commands::kummer_check(&cfg, dim, &mut sink),
        Command::ShootExt { eps } => commands::shoot_ext(&cfg, dim, eps, &mut sink),
        Command::ShootInt { lambda } => commands::shoot_int(&cfg, dim, lambda, &mut sink),
        Command::Match => commands::matching(&cfg, dim, &mut sink).map(|_| ()),
        Command::Profile => commands::profile(&cfg, dim, &mut sink).map(|_| ()),
        Command::VerifyExplicit => commands::explicit(&cfg, dim, &mut sink),
        Command::Evolve { t_blowup } => commands::evolve(&cfg, dim, t_blowup, None, &mut sink),
        Command::Sim { cells, t_end } => {
            let params = SimParams { cells, t_end, ..SimParams::default() };
            commands::sim(&cfg, dim, params, None, &mut sink)
        }
        Command::All => commands::all(&cfg, dim, &mut sink),
    };
    if let Err(e) = res {
        return match e {
            ks_selfsim::Error::Parameter(_) => usage(UsageError(e.to_string())),
            _ => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let failures: Vec<String> =
        sink.failures().iter().map(|c| format!("{} = {:e} (limit {:e})", c.metric, c.value, c.limit)).collect();
    if let Err(e) = sink.flush() {
        eprintln!("error writing output: {e}");
        return ExitCode::from(2);
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("verification failed: {f}");
        }
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
