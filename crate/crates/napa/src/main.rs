use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use napa::commands::{self, AnalysisFlags, Inputs, SimulateOverrides};
use napa::config::parse_methods;
use napa_core::Method;

#[derive(Parser)]
#[command(
    name = "napa",
    version,
    about = "Spatial two-sample multiple testing with auxiliary-statistic weights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment described by a config file.
    Simulate(SimulateArgs),
    /// Test every site of a two-sample dataset.
    Analyze(AnalyzeArgs),
    /// Dump the estimated weight field of a dataset.
    EstimatePi(EstimateArgs),
    /// Write one simulated dataset as CSV files.
    Generate(GenerateArgs),
}

fn methods_arg(s: &Option<String>) -> Result<Option<Vec<Method>>> {
    s.as_deref()
        .map(|s| parse_methods(s).map_err(|e| anyhow::anyhow!("--methods: {e}")))
        .transpose()
}

#[derive(Args)]
struct Tuning {
    /// Spatial bandwidth (cross-validated when omitted).
    #[arg(long = "hs")]
    h_s: Option<f64>,
    /// Auxiliary bandwidth (cross-validated when omitted).
    #[arg(long = "hu")]
    h_u: Option<f64>,
    /// Kernel correlation (estimated from the data when omitted).
    #[arg(long)]
    rho: Option<f64>,
    /// Screening threshold (BH cutoff at level 0.9 when omitted).
    #[arg(long)]
    tau: Option<f64>,
    /// Truncation level for estimated probabilities.
    #[arg(long)]
    xi: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated subset of napa, laws, bh, gap, gap-laws.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Also write first-replication decisions for every sweep point.
    #[arg(long)]
    write_decisions: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    sites: PathBuf,
    #[arg(long)]
    group1: PathBuf,
    #[arg(long)]
    group2: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    methods: Option<String>,
    /// Seeds the pair subsample used to estimate rho.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Smooth over space only, ignoring the auxiliary statistic.
    #[arg(long)]
    spatial_only: bool,
    /// Simulation file describing the true model; adds an `oracle_pi` column.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    replication: u32,
}

fn flags(data: &DataArgs) -> Result<AnalysisFlags> {
    let t = &data.tuning;
    let defaults = AnalysisFlags::default();
    Ok(AnalysisFlags {
        alpha: data.alpha,
        methods: methods_arg(&data.methods)?.unwrap_or(defaults.methods),
        seed: data.seed,
        h_s: t.h_s,
        h_u: t.h_u,
        rho: t.rho,
        tau: t.tau,
        xi: t.xi.unwrap_or(defaults.xi),
    })
}

fn inputs(data: &DataArgs) -> Inputs {
    Inputs {
        sites: data.sites.clone(),
        group1: data.group1.clone(),
        group2: data.group2.clone(),
    }
}

fn run(cli: Cli) -> Result<()> {
    napa::init_thread_pool()?;
    match cli.command {
        Command::Simulate(a) => {
            let ov = SimulateOverrides {
                alpha: a.alpha,
                methods: methods_arg(&a.methods)?,
                seed: a.seed,
                replications: a.replications,
                h_s: a.tuning.h_s,
                h_u: a.tuning.h_u,
                rho: a.tuning.rho,
                tau: a.tuning.tau,
                xi: a.tuning.xi,
                write_decisions: a.write_decisions,
            };
            println!("{}", commands::simulate(&a.config, &a.out, &ov)?);
        }
        Command::Analyze(a) => {
            println!(
                "{}",
                commands::analyze(&inputs(&a.data), &flags(&a.data)?, &a.data.out)?
            );
        }
        Command::EstimatePi(a) => {
            let report = commands::estimate_pi(
                &inputs(&a.data),
                &flags(&a.data)?,
                a.spatial_only,
                a.config.as_deref(),
                &a.data.out,
            )?;
            println!("{report}");
        }
        Command::Generate(a) => {
            for p in commands::generate(&a.config, &a.out, a.seed, a.replication)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
