//! Subcommand implementations, kept separate from argument parsing so they
//! can be driven from tests.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use napa_core::simulate::{self, Beta1Mode, ExperimentConfig};
use napa_core::statistics::compute_site_statistics;
use napa_core::testing::{run_methods, AnalysisOptions};
use napa_core::weights::{self, CvOptions, DEFAULT_XI};
use napa_core::{rng, BandwidthMatrix, Method, SiteStatistics, SpatialGrid, TwoSampleDataset};

use crate::config;
use crate::io;

/// Paths of a two-sample dataset on disk.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub sites: PathBuf,
    pub group1: PathBuf,
    pub group2: PathBuf,
}

/// Analysis settings shared by `analyze` and `estimate-pi`.
#[derive(Debug, Clone)]
pub struct AnalysisFlags {
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub h_s: Option<f64>,
    pub h_u: Option<f64>,
    pub rho: Option<f64>,
    pub tau: Option<f64>,
    pub xi: f64,
}

impl Default for AnalysisFlags {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            methods: Method::ALL.to_vec(),
            seed: 0,
            h_s: None,
            h_u: None,
            rho: None,
            tau: None,
            xi: DEFAULT_XI,
        }
    }
}

impl AnalysisFlags {
    fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            alpha: self.alpha,
            methods: self.methods.clone(),
            tau: self.tau,
            h_s: self.h_s,
            h_u: self.h_u,
            rho: self.rho,
            xi: self.xi,
            seed: self.seed,
            ..AnalysisOptions::default()
        }
    }
}

/// Command-line overrides applied on top of a simulation file.
#[derive(Debug, Clone, Default)]
pub struct SimulateOverrides {
    pub alpha: Option<f64>,
    pub methods: Option<Vec<Method>>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub h_s: Option<f64>,
    pub h_u: Option<f64>,
    pub rho: Option<f64>,
    pub tau: Option<f64>,
    pub xi: Option<f64>,
    pub write_decisions: bool,
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))
}

pub struct SimulateReport {
    pub metrics: PathBuf,
    pub rows: usize,
    pub decisions: Vec<PathBuf>,
    pub summary: Vec<simulate::MetricsSummary>,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for point in &self.summary {
            if let (Some(p), Some(v)) = (point.sweep_param, point.sweep_value) {
                writeln!(f, "{} = {v:.4}", p.name())?;
            }
            for m in &point.methods {
                writeln!(
                    f,
                    "  {:<9} fdr {:.4} (se {:.4})  power {:.4} (se {:.4})",
                    m.method.name(),
                    m.fdr,
                    m.fdr_se,
                    m.power_prop,
                    m.power_prop_se
                )?;
            }
        }
        write!(f, "wrote {} ({} rows)", self.metrics.display(), self.rows)?;
        for d in &self.decisions {
            write!(f, "\nwrote {}", d.display())?;
        }
        Ok(())
    }
}

pub fn load_experiment(path: &Path, ov: &SimulateOverrides) -> Result<(ExperimentConfig, bool)> {
    let parsed = config::load(path)?;
    let mut cfg = parsed.experiment;
    if let Some(a) = ov.alpha {
        ensure!(a > 0.0 && a < 1.0, "alpha must lie in (0,1), got {a}");
        cfg.alpha = a;
    }
    if let Some(m) = &ov.methods {
        cfg.methods = m.clone();
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(r) = ov.replications {
        cfg.replications = r;
    }
    cfg.h_s = ov.h_s.or(cfg.h_s);
    cfg.h_u = ov.h_u.or(cfg.h_u);
    cfg.rho = ov.rho.or(cfg.rho);
    cfg.tau = ov.tau.or(cfg.tau);
    if let Some(x) = ov.xi {
        cfg.xi = x;
    }
    cfg.validate()?;
    Ok((cfg, parsed.write_decisions || ov.write_decisions))
}

/// Runs a simulation file and writes `metrics.csv` (plus one decisions file
/// per sweep point when requested).
pub fn simulate(config_path: &Path, out: &Path, ov: &SimulateOverrides) -> Result<SimulateReport> {
    let (cfg, write_decisions) = load_experiment(config_path, ov)?;
    let result = simulate::run_experiment(&cfg)?;
    create_out(out)?;
    let metrics = out.join("metrics.csv");
    io::write_metrics(&metrics, &result.points)?;
    let mut decisions = Vec::new();
    if write_decisions {
        for (k, (point, rec)) in result.points.iter().zip(&result.first_replications).enumerate() {
            let name = match point.sweep_param {
                Some(p) => format!("decisions_{}_{k}.csv", p.name()),
                None => "decisions.csv".to_string(),
            };
            let path = out.join(name);
            let sets: Vec<_> = rec.decisions.iter().collect();
            io::write_decisions(&path, &rec.p_value, &sets)?;
            decisions.push(path);
        }
    }
    Ok(SimulateReport {
        metrics,
        rows: result.points.iter().map(|p| p.methods.len()).sum(),
        decisions,
        summary: result.points,
    })
}

/// Reads sites and both groups and checks their shapes against each other.
pub fn load_inputs(inputs: &Inputs) -> Result<(SpatialGrid, Vec<f64>, Vec<f64>)> {
    let grid = io::read_sites(&inputs.sites)?;
    let g1 = io::read_group(&inputs.group1, "group1", grid.len())?;
    let g2 = io::read_group(&inputs.group2, "group2", grid.len())?;
    Ok((grid, g1, g2))
}

fn statistics(grid: &SpatialGrid, g1: Vec<f64>, g2: Vec<f64>) -> Result<SiteStatistics> {
    let data = TwoSampleDataset::new(grid, g1, g2)?;
    compute_site_statistics(&data).map_err(|e| match e {
        napa_core::Error::ZeroVariance { group, site } => {
            anyhow::anyhow!("site_id {site}: group {group} has zero sample variance")
        }
        other => other.into(),
    })
}

pub struct AnalyzeReport {
    pub sites: usize,
    pub n1: usize,
    pub n2: usize,
    pub tau: f64,
    pub bandwidth: Option<BandwidthMatrix>,
    pub spatial_h_s: Option<f64>,
    pub rejections: Vec<(Method, usize)>,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for AnalyzeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "sites {}  n1 {}  n2 {}  tau {:.6}",
            self.sites, self.n1, self.n2, self.tau
        )?;
        if let Some(bw) = &self.bandwidth {
            writeln!(
                f,
                "joint bandwidth h_s {:.6}  h_u {:.6}  rho {:.6}",
                bw.h_s, bw.h_u, bw.rho
            )?;
        }
        if let Some(h) = self.spatial_h_s {
            writeln!(f, "spatial bandwidth h_s {h:.6}")?;
        }
        for (m, r) in &self.rejections {
            writeln!(f, "{:<9} {r} rejections", m.name())?;
        }
        for (k, p) in self.files.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Runs the requested procedures on a user dataset and writes one
/// `decisions_<method>.csv` per method.
pub fn analyze(inputs: &Inputs, flags: &AnalysisFlags, out: &Path) -> Result<AnalyzeReport> {
    let (grid, g1, g2) = load_inputs(inputs)?;
    let sites = grid.len();
    let (n1, n2) = (g1.len() / sites, g2.len() / sites);
    let stats = statistics(&grid, g1, g2)?;
    let analysis = run_methods(&stats, &grid, &flags.options())?;
    create_out(out)?;
    let mut files = Vec::new();
    for d in &analysis.decisions {
        let path = out.join(format!("decisions_{}.csv", d.method.name()));
        io::write_decisions(&path, &stats.p_value, &[d])?;
        files.push(path);
    }
    Ok(AnalyzeReport {
        sites,
        n1,
        n2,
        tau: analysis.tau,
        bandwidth: analysis.bandwidth,
        spatial_h_s: analysis.spatial_h_s,
        rejections: analysis.decisions.iter().map(|d| (d.method, d.rejections())).collect(),
        files,
    })
}

pub struct EstimateReport {
    pub path: PathBuf,
    pub tau: f64,
    pub bandwidth: BandwidthMatrix,
    pub spatial_only: bool,
    /// Mean absolute gap between the estimate and the oracle column.
    pub oracle_mae: Option<f64>,
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tau {:.6}  h_s {:.6}", self.tau, self.bandwidth.h_s)?;
        if !self.spatial_only {
            write!(f, "  h_u {:.6}  rho {:.6}", self.bandwidth.h_u, self.bandwidth.rho)?;
        }
        if let Some(m) = self.oracle_mae {
            write!(f, "\nmean |pi_tau_hat - oracle_pi| {m:.6}")?;
        }
        write!(f, "\nwrote {}", self.path.display())
    }
}

/// Oracle `pi(s,u)` for every site from a simulation file describing the
/// generative model. Requires a constant `beta1`.
pub fn oracle_column(cfg: &ExperimentConfig, grid: &SpatialGrid, stats: &SiteStatistics) -> Result<Vec<f64>> {
    ensure!(
        cfg.extents == grid.extents(),
        "oracle config extents {:?} do not match the sites file {:?}",
        cfg.extents,
        grid.extents()
    );
    let Beta1Mode::Constant(b) = cfg.beta1 else {
        bail!("the oracle column needs a constant beta1 in the config");
    };
    let pi = cfg.regions.evaluate(grid)?;
    let mut model = cfg.clone();
    model.n1 = stats.n1;
    model.n2 = stats.n2;
    let truth = simulate::model_truth(&model, &pi, &vec![b; grid.len()]);
    Ok(truth.posterior(&stats.u_stat)?)
}

fn resolve_bandwidth(
    stats: &SiteStatistics,
    grid: &SpatialGrid,
    tau: f64,
    flags: &AnalysisFlags,
    spatial_only: bool,
) -> Result<BandwidthMatrix> {
    let cv = CvOptions::default();
    if spatial_only {
        let h_s = match flags.h_s {
            Some(h) => h,
            None => weights::select_spatial_bandwidth(&stats.p_value, grid, tau, &cv)?.0,
        };
        return Ok(BandwidthMatrix::new(h_s, 1.0, 0.0)?);
    }
    if let (Some(h_s), Some(h_u)) = (flags.h_s, flags.h_u) {
        let rho = flags
            .rho
            .unwrap_or_else(|| weights::estimate_rho(grid, &stats.u_stat, cv.max_pairs, flags.seed));
        return Ok(BandwidthMatrix::new(h_s, h_u, rho)?);
    }
    let cv = CvOptions {
        fixed_hs: flags.h_s,
        fixed_hu: flags.h_u,
        fixed_rho: flags.rho,
        ..cv
    };
    Ok(weights::select_bandwidths_with(&stats.p_value, &stats.u_stat, grid, tau, &cv, flags.seed)?.bandwidth)
}

/// Estimates the weight field and writes `diagnostics.csv`.
pub fn estimate_pi(
    inputs: &Inputs,
    flags: &AnalysisFlags,
    spatial_only: bool,
    oracle_config: Option<&Path>,
    out: &Path,
) -> Result<EstimateReport> {
    let (grid, g1, g2) = load_inputs(inputs)?;
    let stats = statistics(&grid, g1, g2)?;
    let oracle = match oracle_config {
        Some(path) => Some(oracle_column(&config::load(path)?.experiment, &grid, &stats)?),
        None => None,
    };
    let tau = match flags.tau {
        Some(t) => {
            ensure!(t > 0.0 && t < 1.0, "tau must lie in (0,1), got {t}");
            t
        }
        None => weights::select_tau(&stats.p_value, weights::DEFAULT_SCREEN_LEVEL)?,
    };
    let bandwidth = resolve_bandwidth(&stats, &grid, tau, flags, spatial_only)?;
    let field = weights::estimate_pi_tau(&stats, &grid, tau, &bandwidth, flags.xi, spatial_only)?;
    create_out(out)?;
    let path = out.join("diagnostics.csv");
    io::write_diagnostics(
        &path,
        &io::Diagnostics {
            u: &stats.u_stat,
            p: &stats.p_value,
            pi_tau_hat: &field.pi_tau_hat,
            weight: &field.weights,
            oracle_pi: oracle.as_deref(),
        },
    )?;
    Ok(EstimateReport {
        path,
        tau,
        bandwidth,
        spatial_only,
        oracle_mae: oracle.map(|o| simulate::mean_absolute_error(&field.pi_tau_hat, &o)),
    })
}

/// Writes one simulated dataset (`sites.csv`, `group1.csv`, `group2.csv`
/// and `truth.csv`) drawn from a simulation file's base configuration.
pub fn generate(config_path: &Path, out: &Path, seed: Option<u64>, replication: u32) -> Result<Vec<PathBuf>> {
    let ov = SimulateOverrides {
        seed,
        ..SimulateOverrides::default()
    };
    let (mut cfg, _) = load_experiment(config_path, &ov)?;
    cfg.sweep = None;
    let grid = SpatialGrid::new(&cfg.extents)?;
    let pi = cfg.regions.evaluate(&grid)?;
    let mut stream = rng::stream(cfg.seed, rng::Purpose::Data, 0, replication);
    let sim = simulate::generate_dataset(&cfg, &grid, &pi, &mut stream)?;
    create_out(out)?;
    let paths: Vec<PathBuf> = ["sites.csv", "group1.csv", "group2.csv", "truth.csv"]
        .iter()
        .map(|n| out.join(n))
        .collect();
    io::write_sites(&paths[0], &grid)?;
    io::write_group(&paths[1], sim.dataset.group1(), grid.len())?;
    io::write_group(&paths[2], sim.dataset.group2(), grid.len())?;
    io::write_truth(&paths[3], &sim.theta, &pi, &sim.beta1)?;
    Ok(paths)
}
