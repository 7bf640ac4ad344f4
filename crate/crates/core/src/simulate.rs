//! Mixture-model data generation, replicated experiments and error-rate /
//! power metrics.
//!
//! At each site a latent `theta ~ Bernoulli(pi(s))` decides whether the site
//! carries signal. Group 1 draws from `N(theta * beta1(s), var1)` and group 2
//! from `N(theta * (mu + beta1(s)), var2)`, independently across subjects
//! and sites.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::grid::{RegionBox, RegionSpec, SpatialGrid};
use crate::math;
use crate::par;
use crate::rng::{self, Purpose, StreamRng};
use crate::statistics::{compute_site_statistics, SiteStatistics, TwoSampleDataset};
use crate::testing::{run_methods, AnalysisOptions, DecisionSet, Method};
use crate::weights::{self, BandwidthMatrix, CvOptions, DEFAULT_XI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta1Mode {
    Constant(f64),
    /// Drawn independently per site, once per replication.
    Uniform {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Mu,
    /// Replaces the value of every signal box.
    RegionPi,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::RegionPi => "region_pi",
        }
    }

    /// Six evenly spaced points over the ranges used in the power studies.
    pub fn default_values(self) -> Vec<f64> {
        let (lo, hi) = match self {
            SweepParam::Mu => (1.0 / math::sqrt(5.0), 3.0 / math::sqrt(20.0)),
            SweepParam::RegionPi => (0.3, 0.8),
        };
        (0..6).map(|k| lo + (hi - lo) * k as f64 / 5.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub extents: Vec<usize>,
    pub regions: RegionSpec,
    pub mu: f64,
    pub beta1: Beta1Mode,
    pub var1: f64,
    pub var2: f64,
    pub n1: usize,
    pub n2: usize,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub sweep: Option<Sweep>,
    pub xi: f64,
    pub tau: Option<f64>,
    pub h_s: Option<f64>,
    pub h_u: Option<f64>,
    pub rho: Option<f64>,
    pub gap_groups: usize,
    pub cv: CvOptions,
}

fn one_over_sqrt(x: f64) -> f64 {
    1.0 / math::sqrt(x)
}

impl ExperimentConfig {
    fn base(extents: Vec<usize>, boxes: Vec<RegionBox>) -> Self {
        Self {
            extents,
            regions: RegionSpec::new(boxes, 0.05),
            mu: 3.0 * one_over_sqrt(20.0),
            beta1: Beta1Mode::Constant(one_over_sqrt(20.0)),
            var1: 1.0,
            var2: 4.0,
            n1: 100,
            n2: 100,
            alpha: 0.05,
            replications: 200,
            seed: 20_240_101,
            methods: Method::ALL.to_vec(),
            sweep: None,
            xi: DEFAULT_XI,
            tau: None,
            h_s: None,
            h_u: None,
            rho: None,
            gap_groups: 3,
            cv: CvOptions::default(),
        }
    }

    /// Piecewise-constant 1D design on 5000 sites.
    pub fn study_1d() -> Self {
        Self::study_1d_scaled(5000)
    }

    /// The 1D design on `m` sites, with signal intervals scaled in
    /// proportion (a lattice refinement of the same domain).
    pub fn study_1d_scaled(m: usize) -> Self {
        let scale = |x: usize| (x * m + 2500) / 5000;
        let interval = |lo: usize, hi: usize| vec![(scale(lo - 1) + 1, scale(hi).max(scale(lo - 1) + 1))];
        Self::base(
            vec![m],
            vec![
                RegionBox::new(interval(1001, 1200), 0.8),
                RegionBox::new(interval(2001, 2200), 0.8),
                RegionBox::new(interval(3001, 3200), 0.6),
                RegionBox::new(interval(4001, 4200), 0.6),
            ],
        )
    }

    /// Two rectangles on a 100 x 50 lattice.
    pub fn study_2d() -> Self {
        Self::base(
            vec![100, 50],
            vec![
                RegionBox::new(vec![(20, 40), (10, 30)], 0.8),
                RegionBox::new(vec![(60, 80), (10, 30)], 0.6),
            ],
        )
    }

    /// One cube on a 20 x 25 x 15 lattice.
    pub fn study_3d() -> Self {
        Self::base(
            vec![20, 25, 15],
            vec![RegionBox::new(vec![(5, 15), (5, 15), (1, 10)], 0.7)],
        )
    }

    /// Sweep-scenario variant: `beta1 ~ Uniform(-1, 1) / sqrt(5)`.
    pub fn with_uniform_beta1(mut self) -> Self {
        let b = one_over_sqrt(5.0);
        self.beta1 = Beta1Mode::Uniform { lo: -b, hi: b };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let grid = SpatialGrid::new(&self.extents)?;
        self.regions.validate(&grid)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !self.mu.is_finite() {
            return Err(Error::NonFinite("mu"));
        }
        match self.beta1 {
            Beta1Mode::Constant(b) if !b.is_finite() => return Err(Error::NonFinite("beta1")),
            Beta1Mode::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                return Err(invalid("beta1", "uniform bounds must be finite with lo <= hi"))
            }
            _ => {}
        }
        for (name, v) in [("var1", self.var1), ("var2", self.var2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be a positive finite number"));
            }
        }
        if self.n1 < 2 {
            return Err(Error::TooFewSamples {
                group: 1,
                count: self.n1,
            });
        }
        if self.n2 < 2 {
            return Err(Error::TooFewSamples {
                group: 2,
                count: self.n2,
            });
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method is required"));
        }
        if !(self.xi > 0.0 && self.xi < 0.5) {
            return Err(invalid("xi", "must lie in (0, 0.5)"));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid("tau", "must lie in (0,1)"));
            }
        }
        for (name, v) in [("hs", self.h_s), ("hu", self.h_u)] {
            if let Some(h) = v {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(invalid(name, "must be positive"));
                }
            }
        }
        if let Some(r) = self.rho {
            if !(r.abs() < 1.0) {
                return Err(invalid("rho", "must satisfy |rho| < 1"));
            }
        }
        if self.gap_groups < 1 {
            return Err(invalid("gap_groups", "must be at least 1"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep", "no sweep values"));
            }
            for &v in &s.values {
                if !v.is_finite() {
                    return Err(Error::NonFinite("sweep value"));
                }
                if s.param == SweepParam::RegionPi && !(v > 0.0 && v < 1.0) {
                    return Err(invalid("sweep", format!("region_pi value {v} not in (0,1)")));
                }
            }
        }
        Ok(())
    }

    /// The configuration at one sweep value.
    pub fn at_sweep_value(&self, param: SweepParam, value: f64) -> Self {
        let mut cfg = self.clone();
        match param {
            SweepParam::Mu => cfg.mu = value,
            SweepParam::RegionPi => cfg.regions.boxes.iter_mut().for_each(|b| b.value = value),
        }
        cfg.sweep = None;
        cfg
    }

    /// `(param, value, config)` for every sweep point; a single point with no
    /// parameter when there is no sweep.
    pub fn sweep_points(&self) -> Vec<(Option<SweepParam>, Option<f64>, ExperimentConfig)> {
        match &self.sweep {
            None => vec![(None, None, self.clone())],
            Some(s) => s
                .values
                .iter()
                .map(|&v| (Some(s.param), Some(v), self.at_sweep_value(s.param, v)))
                .collect(),
        }
    }

    pub fn analysis_options(&self, seed: u64) -> AnalysisOptions {
        AnalysisOptions {
            alpha: self.alpha,
            methods: self.methods.clone(),
            tau: self.tau,
            h_s: self.h_s,
            h_u: self.h_u,
            rho: self.rho,
            xi: self.xi,
            gap_groups: self.gap_groups,
            cv: self.cv.clone(),
            seed,
        }
    }
}

/// One draw from the generative model.
#[derive(Debug, Clone)]
pub struct SimulatedData<'g> {
    pub dataset: TwoSampleDataset<'g>,
    pub theta: Vec<bool>,
    pub beta1: Vec<f64>,
}

/// Draws `theta`, `beta1` and both observation matrices, in that order,
/// from `rng`.
pub fn generate_dataset<'g>(
    config: &ExperimentConfig,
    grid: &'g SpatialGrid,
    pi_field: &[f64],
    rng: &mut StreamRng,
) -> Result<SimulatedData<'g>> {
    let m = grid.len();
    if pi_field.len() != m {
        return Err(Error::DimensionMismatch("pi field vs grid".into()));
    }
    let theta: Vec<bool> = pi_field.iter().map(|&p| rng.random::<f64>() < p).collect();
    let beta1: Vec<f64> = match config.beta1 {
        Beta1Mode::Constant(b) => vec![b; m],
        Beta1Mode::Uniform { lo, hi } => (0..m).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect(),
    };
    let mean1: Vec<f64> = theta
        .iter()
        .zip(&beta1)
        .map(|(&t, &b)| if t { b } else { 0.0 })
        .collect();
    let mean2: Vec<f64> = theta
        .iter()
        .zip(&beta1)
        .map(|(&t, &b)| if t { config.mu + b } else { 0.0 })
        .collect();
    let draw = |rng: &mut StreamRng, n: usize, means: &[f64], var: f64| {
        let sd = math::sqrt(var);
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            for &mu in means {
                let z: f64 = rng.sample(StandardNormal);
                out.push(mu + sd * z);
            }
        }
        out
    };
    let group1 = draw(rng, config.n1, &mean1, config.var1);
    let group2 = draw(rng, config.n2, &mean2, config.var2);
    Ok(SimulatedData {
        dataset: TwoSampleDataset::new(grid, group1, group2)?,
        theta,
        beta1,
    })
}

fn check_aligned(decisions: &DecisionSet, theta: &[bool]) -> Result<()> {
    if decisions.rejected.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decisions for {} sites",
            decisions.rejected.len(),
            theta.len()
        )));
    }
    Ok(())
}

/// False rejections over `max(rejections, 1)`.
pub fn empirical_fdp(decisions: &DecisionSet, theta: &[bool]) -> Result<f64> {
    check_aligned(decisions, theta)?;
    let (mut r, mut v) = (0usize, 0usize);
    for (&rej, &t) in decisions.rejected.iter().zip(theta) {
        if rej {
            r += 1;
            if !t {
                v += 1;
            }
        }
    }
    Ok(v as f64 / r.max(1) as f64)
}

/// `(true positives, true positives / m1)`, with the proportion 0 when there
/// are no signal sites.
pub fn empirical_power(decisions: &DecisionSet, theta: &[bool]) -> Result<(usize, f64)> {
    check_aligned(decisions, theta)?;
    let m1 = theta.iter().filter(|&&t| t).count();
    let tp = decisions.rejected.iter().zip(theta).filter(|&(&r, &t)| r && t).count();
    Ok((tp, if m1 == 0 { 0.0 } else { tp as f64 / m1 as f64 }))
}

/// Per-site quantities of the generative model that the oracle needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTruth {
    pub pi_s: Vec<f64>,
    /// Mean of `U` at a signal site (unit variance, population `kappa`).
    pub delta: Vec<f64>,
    /// Mean of `T` at a signal site.
    pub gamma: Vec<f64>,
}

/// Mean of the auxiliary statistic at a signal site,
/// `(beta1 + kappa (mu + beta1)) / sqrt(var1/n1 + kappa^2 var2/n2)` with
/// `kappa = n2 var1 / (n1 var2)`.
pub fn auxiliary_shift(beta1: f64, mu: f64, var1: f64, var2: f64, n1: usize, n2: usize) -> f64 {
    let (n1, n2) = (n1 as f64, n2 as f64);
    let kappa = n2 * var1 / (n1 * var2);
    (beta1 + kappa * (mu + beta1)) / math::sqrt(var1 / n1 + kappa * kappa * var2 / n2)
}

/// Mean of the primary statistic at a signal site.
pub fn primary_shift(mu: f64, var1: f64, var2: f64, n1: usize, n2: usize) -> f64 {
    -mu / math::sqrt(var1 / n1 as f64 + var2 / n2 as f64)
}

pub fn model_truth(config: &ExperimentConfig, pi_field: &[f64], beta1: &[f64]) -> ModelTruth {
    let gamma = primary_shift(config.mu, config.var1, config.var2, config.n1, config.n2);
    ModelTruth {
        pi_s: pi_field.to_vec(),
        delta: beta1
            .iter()
            .map(|&b| auxiliary_shift(b, config.mu, config.var1, config.var2, config.n1, config.n2))
            .collect(),
        gamma: vec![gamma; pi_field.len()],
    }
}

impl ModelTruth {
    /// Oracle posterior non-null probability at every site given observed `u`.
    pub fn posterior(&self, u: &[f64]) -> Result<Vec<f64>> {
        u.iter()
            .zip(&self.pi_s)
            .zip(&self.delta)
            .map(|((&u, &pi), &d)| weights::oracle_posterior(pi, u, d))
            .collect()
    }

    /// Oracle screened probability
    /// `pi(s,u) * (1 - (1 - F1(tau)) / (1 - tau))`, with `F1` the signal-site
    /// CDF of the two-sided p-value (normal `T`, independent of `U`).
    pub fn pi_tau(&self, u: &[f64], tau: f64) -> Result<Vec<f64>> {
        let post = self.posterior(u)?;
        let z = math::two_sided_critical(tau);
        Ok(post
            .into_iter()
            .zip(&self.gamma)
            .map(|(pi, &g)| {
                let f1 = math::cdf(-z - g) + (1.0 - math::cdf(z - g));
                pi * (1.0 - (1.0 - f1) / (1.0 - tau))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: Method,
    pub fdr: f64,
    pub fdr_se: f64,
    pub power_prop: f64,
    pub power_prop_se: f64,
    pub power_raw: f64,
    pub power_raw_se: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub sweep_param: Option<SweepParam>,
    pub sweep_value: Option<f64>,
    pub methods: Vec<MethodMetrics>,
}

impl MetricsSummary {
    pub fn get(&self, method: Method) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var / n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    fdp: f64,
    tp: usize,
    tp_prop: f64,
}

/// Site p-values and decisions of the first replication at a sweep point.
#[derive(Debug, Clone)]
pub struct ReplicationRecord {
    pub p_value: Vec<f64>,
    pub theta: Vec<bool>,
    pub decisions: Vec<DecisionSet>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub points: Vec<MetricsSummary>,
    pub first_replications: Vec<ReplicationRecord>,
}

fn replication_error(seed: u64, replication: usize, sweep_point: usize, e: Error) -> Error {
    Error::Replication {
        seed,
        replication,
        sweep_point,
        source: Box::new(e),
    }
}

/// Simulates, analyzes and scores one replication.
fn run_replication(
    cfg: &ExperimentConfig,
    grid: &SpatialGrid,
    pi_field: &[f64],
    seed: u64,
    point: u32,
    rep: u32,
) -> Result<(Vec<Outcome>, ReplicationRecord)> {
    let mut rng = rng::stream(seed, Purpose::Data, point, rep);
    let sim = generate_dataset(cfg, grid, pi_field, &mut rng)?;
    let stats = compute_site_statistics(&sim.dataset)?;
    let opts = cfg.analysis_options(rng::derive_seed(seed, point, rep));
    let analysis = run_methods(&stats, grid, &opts)?;
    let outcomes = analysis
        .decisions
        .iter()
        .map(|d| {
            let fdp = empirical_fdp(d, &sim.theta)?;
            let (tp, tp_prop) = empirical_power(d, &sim.theta)?;
            Ok(Outcome { fdp, tp, tp_prop })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        outcomes,
        ReplicationRecord {
            p_value: stats.p_value,
            theta: sim.theta,
            decisions: analysis.decisions,
        },
    ))
}

/// Runs every sweep point and replication. Each replication draws from its
/// own `(seed, sweep point, replication)` stream and results are reduced in
/// replication order, so output does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let grid = SpatialGrid::new(&config.extents)?;
    let mut points = Vec::new();
    let mut first_replications = Vec::new();
    for (pi, (param, value, cfg)) in config.sweep_points().into_iter().enumerate() {
        let pi_field = cfg.regions.evaluate(&grid)?;
        let results = par::map_range(cfg.replications, |rep| {
            run_replication(&cfg, &grid, &pi_field, config.seed, pi as u32, rep as u32)
                .map_err(|e| replication_error(config.seed, rep, pi, e))
        });
        let mut per_method: Vec<Vec<Outcome>> = vec![Vec::with_capacity(cfg.replications); cfg.methods.len()];
        let mut first = None;
        for r in results {
            let (outcomes, record) = r?;
            for (k, o) in outcomes.into_iter().enumerate() {
                per_method[k].push(o);
            }
            if first.is_none() {
                first = Some(record);
            }
        }
        let methods = cfg
            .methods
            .iter()
            .zip(&per_method)
            .map(|(&method, outs)| {
                let fdp: Vec<f64> = outs.iter().map(|o| o.fdp).collect();
                let prop: Vec<f64> = outs.iter().map(|o| o.tp_prop).collect();
                let raw: Vec<f64> = outs.iter().map(|o| o.tp as f64).collect();
                let (fdr, fdr_se) = mean_se(&fdp);
                let (power_prop, power_prop_se) = mean_se(&prop);
                let (power_raw, power_raw_se) = mean_se(&raw);
                MethodMetrics {
                    method,
                    fdr,
                    fdr_se,
                    power_prop,
                    power_prop_se,
                    power_raw,
                    power_raw_se,
                    replications: outs.len(),
                }
            })
            .collect();
        points.push(MetricsSummary {
            sweep_param: param,
            sweep_value: value,
            methods,
        });
        first_replications.extend(first);
    }
    Ok(ExperimentResult {
        points,
        first_replications,
    })
}

/// Monte-Carlo comparison of oracle NAPA weights `pi(s,u)/(1-pi(s,u))` with
/// oracle LAWS weights `pi(s)/(1-pi(s))` at shared thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub replications: usize,
    pub t_laws: f64,
    pub t_napa: f64,
    pub mfdr_laws_at_t_laws: f64,
    pub mfdr_laws_at_t_laws_se: f64,
    pub mfdr_napa_at_t_laws: f64,
    pub mfdr_napa_at_t_laws_se: f64,
    /// Standard error of the paired difference NAPA - LAWS at `t_laws`.
    pub mfdr_diff_se: f64,
    pub psi_napa_at_t_napa: f64,
    pub psi_napa_at_t_laws: f64,
    pub psi_laws_at_t_laws: f64,
    pub psi_napa_at_t_napa_se: f64,
    pub psi_napa_at_t_laws_se: f64,
    pub psi_laws_at_t_laws_se: f64,
    /// Paired-difference standard errors for the two power comparisons.
    pub psi_gap_napa_thresholds_se: f64,
    pub psi_gap_napa_laws_se: f64,
}

impl DominanceReport {
    /// `mFDR(NAPA @ t_laws) <= mFDR(LAWS @ t_laws) + k * se`.
    pub fn mfdr_holds(&self, k: f64) -> bool {
        self.mfdr_napa_at_t_laws <= self.mfdr_laws_at_t_laws + k * self.mfdr_diff_se
    }

    /// `Psi(NAPA @ t_napa) >= Psi(NAPA @ t_laws) >= Psi(LAWS @ t_laws)`, each
    /// within `k` paired standard errors.
    pub fn psi_ordering_holds(&self, k: f64) -> bool {
        self.psi_napa_at_t_napa >= self.psi_napa_at_t_laws - k * self.psi_gap_napa_thresholds_se
            && self.psi_napa_at_t_laws >= self.psi_laws_at_t_laws - k * self.psi_gap_napa_laws_se
    }
}

/// Number of thresholds in the shared grid of [`oracle_dominance_check`].
pub const DOMINANCE_GRID_POINTS: usize = 600;

fn threshold_grid() -> Vec<f64> {
    weights::log_spaced(1e-8, 1.0, DOMINANCE_GRID_POINTS)
}

/// `(false, true)` rejection counts per threshold.
type Counts = Vec<(u32, u32)>;

/// Counts `(false rejections, true rejections)` of `p_w <= t` for every `t`
/// in `grid` (ascending).
fn counts_at(pw: &[f64], theta: &[bool], grid: &[f64]) -> Counts {
    let mut null: Vec<f64> = pw.iter().zip(theta).filter(|&(_, &t)| !t).map(|(&p, _)| p).collect();
    let mut alt: Vec<f64> = pw.iter().zip(theta).filter(|&(_, &t)| t).map(|(&p, _)| p).collect();
    null.sort_unstable_by(f64::total_cmp);
    alt.sort_unstable_by(f64::total_cmp);
    grid.iter()
        .map(|&t| {
            let v = null.partition_point(|&p| p <= t) as u32;
            let s = alt.partition_point(|&p| p <= t) as u32;
            (v, s)
        })
        .collect()
}

struct RatioStats {
    value: f64,
    se: f64,
    /// Per-replication linearized contributions, for paired differences.
    influence: Vec<f64>,
}

fn ratio_stats(v: &[f64], r: &[f64]) -> RatioStats {
    let n = v.len() as f64;
    let vbar = v.iter().sum::<f64>() / n;
    let rbar = r.iter().sum::<f64>() / n;
    if rbar == 0.0 {
        return RatioStats {
            value: 0.0,
            se: 0.0,
            influence: vec![0.0; v.len()],
        };
    }
    let value = vbar / rbar;
    let influence: Vec<f64> = v.iter().zip(r).map(|(&v, &r)| (v - value * r) / rbar).collect();
    let (_, se) = mean_se(&influence);
    RatioStats { value, se, influence }
}

fn paired_se(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_se(&d).1
}

/// Empirical check of the oracle ordering between NAPA and LAWS weights.
/// Uses the base configuration (any sweep is ignored).
pub fn oracle_dominance_check(config: &ExperimentConfig, replications: usize) -> Result<DominanceReport> {
    let mut cfg = config.clone();
    cfg.sweep = None;
    cfg.replications = replications.max(1);
    cfg.validate()?;
    if replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    let grid = SpatialGrid::new(&cfg.extents)?;
    let pi_field = cfg.regions.evaluate(&grid)?;
    let tgrid = threshold_grid();
    let laws_w: Vec<f64> = pi_field.iter().map(|&p| p / (1.0 - p)).collect();
    let per_rep = par::map_range(replications, |rep| -> Result<(Counts, Counts)> {
        let mut rng = rng::stream(cfg.seed, Purpose::Data, u32::MAX, rep as u32);
        let sim = generate_dataset(&cfg, &grid, &pi_field, &mut rng)?;
        let stats = compute_site_statistics(&sim.dataset)?;
        let truth = model_truth(&cfg, &pi_field, &sim.beta1);
        let post = truth.posterior(&stats.u_stat)?;
        let napa_w: Vec<f64> = post.iter().map(|&p| p / (1.0 - p)).collect();
        let napa_pw: Vec<f64> = stats
            .p_value
            .iter()
            .zip(&napa_w)
            .map(|(&p, &w)| (p / w).min(1.0))
            .collect();
        let laws_pw: Vec<f64> = stats
            .p_value
            .iter()
            .zip(&laws_w)
            .map(|(&p, &w)| (p / w).min(1.0))
            .collect();
        Ok((
            counts_at(&napa_pw, &sim.theta, &tgrid),
            counts_at(&laws_pw, &sim.theta, &tgrid),
        ))
    })
    .into_iter()
    .enumerate()
    .map(|(rep, r)| r.map_err(|e| replication_error(cfg.seed, rep, 0, e)))
    .collect::<Result<Vec<_>>>()?;

    // side 0 = NAPA weights, side 1 = LAWS weights
    let at = |rep: &(Counts, Counts), side: usize, k: usize| {
        if side == 0 {
            rep.0[k]
        } else {
            rep.1[k]
        }
    };
    let mfdr = |side: usize, k: usize| {
        let (mut v, mut s) = (0u64, 0u64);
        for rep in &per_rep {
            let (a, b) = at(rep, side, k);
            v += a as u64;
            s += b as u64;
        }
        if v + s == 0 {
            0.0
        } else {
            v as f64 / (v + s) as f64
        }
    };
    // largest grid threshold whose pooled mFDR stays at or below alpha
    let oracle_index = |side: usize| {
        (0..tgrid.len())
            .rev()
            .find(|&k| mfdr(side, k) <= cfg.alpha)
            .unwrap_or(0)
    };
    let k_napa = oracle_index(0);
    let k_laws = oracle_index(1);

    let series = |side: usize, k: usize| {
        let v: Vec<f64> = per_rep.iter().map(|r| at(r, side, k).0 as f64).collect();
        let s: Vec<f64> = per_rep.iter().map(|r| at(r, side, k).1 as f64).collect();
        let rej: Vec<f64> = v.iter().zip(&s).map(|(a, b)| a + b).collect();
        (v, s, rej)
    };
    let (v_nl, s_nl, r_nl) = series(0, k_laws);
    let (v_ll, s_ll, r_ll) = series(1, k_laws);
    let (_, s_nn, _) = series(0, k_napa);
    let napa_ratio = ratio_stats(&v_nl, &r_nl);
    let laws_ratio = ratio_stats(&v_ll, &r_ll);
    let (psi_nn, psi_nn_se) = mean_se(&s_nn);
    let (psi_nl, psi_nl_se) = mean_se(&s_nl);
    let (psi_ll, psi_ll_se) = mean_se(&s_ll);
    Ok(DominanceReport {
        replications,
        t_laws: tgrid[k_laws],
        t_napa: tgrid[k_napa],
        mfdr_laws_at_t_laws: laws_ratio.value,
        mfdr_laws_at_t_laws_se: laws_ratio.se,
        mfdr_napa_at_t_laws: napa_ratio.value,
        mfdr_napa_at_t_laws_se: napa_ratio.se,
        mfdr_diff_se: paired_se(&napa_ratio.influence, &laws_ratio.influence),
        psi_napa_at_t_napa: psi_nn,
        psi_napa_at_t_laws: psi_nl,
        psi_laws_at_t_laws: psi_ll,
        psi_napa_at_t_napa_se: psi_nn_se,
        psi_napa_at_t_laws_se: psi_nl_se,
        psi_laws_at_t_laws_se: psi_ll_se,
        psi_gap_napa_thresholds_se: paired_se(&s_nn, &s_nl),
        psi_gap_napa_laws_se: paired_se(&s_nl, &s_ll),
    })
}

pub fn mean_squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub fn mean_absolute_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Bandwidth on the cross-validation search grid whose clamped estimate is
/// closest (in mean squared error) to a known target field.
pub fn oracle_bandwidth(
    stats: &SiteStatistics,
    grid: &SpatialGrid,
    tau: f64,
    target: &[f64],
    opts: &CvOptions,
    rho: f64,
    xi: f64,
) -> Result<(BandwidthMatrix, f64)> {
    let sd_u = weights::population_sd(&stats.u_stat);
    if !(sd_u > 0.0) {
        return Err(Error::DegenerateAuxiliary);
    }
    let hs_grid = weights::hs_search_grid(grid, opts);
    let hu_grid: Vec<f64> = weights::log_spaced(opts.hu_min_sd, opts.hu_max_sd, opts.hu_points)
        .into_iter()
        .map(|x| x * sd_u)
        .collect();
    let mut best: Option<(BandwidthMatrix, f64)> = None;
    for &h_s in &hs_grid {
        for &h_u in &hu_grid {
            let bw = BandwidthMatrix::new(h_s, h_u, rho)?;
            let field = weights::estimate_pi_tau(stats, grid, tau, &bw, xi, false)?;
            let err = mean_squared_error(&field.pi_tau_hat, target);
            if best.as_ref().is_none_or(|(_, e)| err < *e) {
                best = Some((bw, err));
            }
        }
    }
    best.ok_or_else(|| invalid("bandwidth grid", "empty search grid"))
}

/// Short label for a sweep point, used in file names.
pub fn sweep_label(param: Option<SweepParam>, value: Option<f64>) -> String {
    match (param, value) {
        (Some(p), Some(v)) => format!("{}_{v}", p.name()),
        _ => String::from("base"),
    }
}
