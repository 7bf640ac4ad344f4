//! Weighted p-values and step-up thresholds: NAPA and the BH, LAWS,
//! GAP-lite and GAP-then-LAWS baselines.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::statistics::SiteStatistics;
use crate::weights::{self, BandwidthMatrix, CvOptions, WeightField, DEFAULT_XI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Napa,
    Laws,
    Bh,
    GapLite,
    GapThenLaws,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Napa,
        Method::Laws,
        Method::Bh,
        Method::GapLite,
        Method::GapThenLaws,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Napa => "napa",
            Method::Laws => "laws",
            Method::Bh => "bh",
            Method::GapLite => "gap",
            Method::GapThenLaws => "gap-laws",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim()).ok_or_else(|| {
            invalid(
                "method",
                alloc::format!("unknown method `{s}` (expected napa, laws, bh, gap, gap-laws)"),
            )
        })
    }
}

/// Reject/accept flags for one procedure. `threshold` is the cutoff applied
/// to `weighted_p` (0 when nothing is rejected).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSet {
    pub method: Method,
    pub rejected: Vec<bool>,
    pub threshold: f64,
    pub weighted_p: Vec<f64>,
}

impl DecisionSet {
    pub fn rejections(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `min(p / w, 1)` elementwise.
pub fn weighted_pvalues(p: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if p.len() != w.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} p-values and {} weights",
            p.len(),
            w.len()
        )));
    }
    if let Some(bad) = w.iter().find(|&&x| !(x > 0.0)) {
        return Err(invalid("weight", alloc::format!("weights must be positive, got {bad}")));
    }
    Ok(p.iter().zip(w).map(|(&p, &w)| (p / w).min(1.0)).collect())
}

/// Largest `k` (1-based) with `sorted[k-1] < 1` and
/// `scale * sorted[k-1] <= alpha * k`, or 0. Capped values (`p_w = 1`)
/// carry no evidence and are never rejected.
pub(crate) fn step_up_count(sorted: &[f64], scale: f64, alpha: f64) -> usize {
    let below_cap = sorted.partition_point(|&p| p < 1.0);
    (1..=below_cap)
        .rev()
        .find(|&k| !(scale > 0.0) || scale * sorted[k - 1] <= alpha * k as f64)
        .unwrap_or(0)
}

/// Step-up rule shared by every procedure: rejects the `k*` smallest values,
/// `k* = max{k : p_(k) < 1, scale * p_(k) <= alpha * k}`. Equal values share
/// fate. A non-positive `scale` (vanishing estimated null mass) admits every
/// value below the cap.
fn step_up(method: Method, weighted_p: Vec<f64>, scale: f64, alpha: f64) -> DecisionSet {
    let mut sorted = weighted_p.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let k = step_up_count(&sorted, scale, alpha);
    let (threshold, rejected) = if k == 0 {
        (0.0, vec![false; weighted_p.len()])
    } else {
        let t = sorted[k - 1];
        (t, weighted_p.iter().map(|&p| p <= t).collect())
    };
    DecisionSet {
        method,
        rejected,
        threshold,
        weighted_p,
    }
}

/// Data-driven NAPA threshold: the largest `t` whose estimated false
/// discovery proportion `sum(pi_hat) * t / max(#{p_w <= t}, 1)` stays at or
/// below `alpha`. Between jump points the estimate grows linearly in `t`,
/// so the supremum is attained at a sorted weighted p-value and the rule is
/// the step-up scan with scale `sum(pi_hat)`.
pub fn napa_threshold(weighted_p: &[f64], pi_hat: &[f64], alpha: f64) -> Result<DecisionSet> {
    threshold_with_method(Method::Napa, weighted_p, pi_hat, alpha)
}

fn threshold_with_method(method: Method, weighted_p: &[f64], pi_hat: &[f64], alpha: f64) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    if weighted_p.len() != pi_hat.len() {
        return Err(Error::DimensionMismatch("weighted p-values vs pi_hat".into()));
    }
    let s_pi: f64 = pi_hat.iter().sum();
    Ok(step_up(method, weighted_p.to_vec(), s_pi, alpha))
}

/// Benjamini-Hochberg step-up at level `alpha`.
pub fn bh_procedure(p: &[f64], alpha: f64) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    Ok(step_up(Method::Bh, p.to_vec(), p.len() as f64, alpha))
}

/// NAPA with a precomputed weight field.
pub fn napa_with_weights(stats: &SiteStatistics, field: &WeightField, alpha: f64) -> Result<DecisionSet> {
    let pw = weighted_pvalues(&stats.p_value, &field.weights)?;
    napa_threshold(&pw, &field.pi_tau_hat, alpha)
}

/// Full NAPA: joint (space, auxiliary) weights, weighted p-values and the
/// data-driven threshold.
pub fn napa_procedure(
    stats: &SiteStatistics,
    grid: &SpatialGrid,
    alpha: f64,
    tau: f64,
    bw: &BandwidthMatrix,
) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    let field = weights::estimate_pi_tau(stats, grid, tau, bw, DEFAULT_XI, false)?;
    napa_with_weights(stats, &field, alpha)
}

#[allow(clippy::too_many_arguments)]
fn laws_on(
    p: &[f64],
    u: &[f64],
    grid: &SpatialGrid,
    alpha: f64,
    tau: f64,
    bw: &BandwidthMatrix,
    xi: f64,
    method: Method,
) -> Result<DecisionSet> {
    let field = weights::estimate_pi_tau_from(p, u, grid, tau, bw, xi, true)?;
    let pw = weighted_pvalues(p, &field.weights)?;
    threshold_with_method(method, &pw, &field.pi_tau_hat, alpha)
}

/// LAWS: space-only kernel weights (bandwidth `bw.h_s`), same threshold rule.
pub fn laws_procedure(
    stats: &SiteStatistics,
    grid: &SpatialGrid,
    alpha: f64,
    tau: f64,
    bw: &BandwidthMatrix,
) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    laws_on(
        &stats.p_value,
        &stats.u_stat,
        grid,
        alpha,
        tau,
        bw,
        DEFAULT_XI,
        Method::Laws,
    )
}

/// Group assignment and group-level estimates for GAP-lite.
#[derive(Debug, Clone, PartialEq)]
pub struct GapGroups {
    pub group: Vec<usize>,
    pub sizes: Vec<usize>,
    pub pi_hat: Vec<f64>,
}

/// Splits sites into `n_groups` by quantiles of `|U|` (a value equal to a
/// cut point joins the lower group) and computes a Storey-type non-null
/// fraction per group, clamped into `[xi, 1 - xi]`. Groups left empty by
/// ties get size 0.
pub fn gap_groups(p: &[f64], u: &[f64], tau: f64, n_groups: usize, xi: f64) -> Result<GapGroups> {
    let m = p.len();
    if u.len() != m {
        return Err(Error::DimensionMismatch("p-values vs auxiliary".into()));
    }
    if n_groups < 1 {
        return Err(invalid("n_groups", "must be at least 1"));
    }
    if m < n_groups {
        return Err(invalid("n_groups", "more groups than sites"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau", "must lie in (0,1)"));
    }
    let mut abs: Vec<f64> = u.iter().map(|x| x.abs()).collect();
    abs.sort_unstable_by(f64::total_cmp);
    // cut g separates group g-1 from g: the largest |U| in the lower block
    let cuts: Vec<f64> = (1..n_groups).map(|g| abs[g * m / n_groups - 1]).collect();
    let group: Vec<usize> = u
        .iter()
        .map(|x| cuts.iter().filter(|&&c| x.abs() > c).count())
        .collect();
    let mut sizes = vec![0usize; n_groups];
    let mut above = vec![0usize; n_groups];
    for (&g, &pv) in group.iter().zip(p) {
        sizes[g] += 1;
        if pv > tau {
            above[g] += 1;
        }
    }
    let pi_hat = sizes
        .iter()
        .zip(&above)
        .map(|(&n, &a)| {
            if n == 0 {
                return xi;
            }
            let raw = 1.0 - a as f64 / ((1.0 - tau) * n as f64);
            raw.max(xi).min(1.0 - xi)
        })
        .collect();
    Ok(GapGroups { group, sizes, pi_hat })
}

/// Group-weighted p-values `min(p / w_g, 1)` and per-site group `pi_hat`.
fn gap_weighted(p: &[f64], groups: &GapGroups) -> (Vec<f64>, Vec<f64>) {
    let site_pi: Vec<f64> = groups.group.iter().map(|&g| groups.pi_hat[g]).collect();
    let pw = p
        .iter()
        .zip(&site_pi)
        .map(|(&p, &pi)| (p * (1.0 - pi) / pi).min(1.0))
        .collect();
    (pw, site_pi)
}

/// GAP-lite: a simplified stand-in for GAP with `n_groups` quantile groups of
/// `|U|` and Storey-type group weights, thresholded by the NAPA rule with
/// `sum_g m_g pi_g` as the estimated null scale.
pub fn gap_lite_procedure(stats: &SiteStatistics, alpha: f64, tau: f64, n_groups: usize) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    let groups = gap_groups(&stats.p_value, &stats.u_stat, tau, n_groups, DEFAULT_XI)?;
    let (pw, site_pi) = gap_weighted(&stats.p_value, &groups);
    threshold_with_method(Method::GapLite, &pw, &site_pi, alpha)
}

/// GAP-lite weighted p-values fed to LAWS as if they were raw p-values.
pub fn gap_then_laws_procedure(
    stats: &SiteStatistics,
    grid: &SpatialGrid,
    alpha: f64,
    tau: f64,
    bw: &BandwidthMatrix,
) -> Result<DecisionSet> {
    check_alpha(alpha)?;
    let groups = gap_groups(&stats.p_value, &stats.u_stat, tau, 3, DEFAULT_XI)?;
    let (pw, _) = gap_weighted(&stats.p_value, &groups);
    laws_on(
        &pw,
        &stats.u_stat,
        grid,
        alpha,
        tau,
        bw,
        DEFAULT_XI,
        Method::GapThenLaws,
    )
}

/// Settings for [`run_methods`]. Unset `tau` and bandwidth entries are
/// chosen from the data (BH screening cutoff, cross-validation, pair
/// correlation for `rho`).
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub tau: Option<f64>,
    pub h_s: Option<f64>,
    pub h_u: Option<f64>,
    pub rho: Option<f64>,
    pub xi: f64,
    pub gap_groups: usize,
    pub cv: CvOptions,
    /// Seed for the pair subsample behind `rho`.
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            methods: Method::ALL.to_vec(),
            tau: None,
            h_s: None,
            h_u: None,
            rho: None,
            xi: DEFAULT_XI,
            gap_groups: 3,
            cv: CvOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub tau: f64,
    /// Joint bandwidth used by NAPA (present when NAPA was requested).
    pub bandwidth: Option<BandwidthMatrix>,
    /// Spatial bandwidth used by LAWS and GAP-then-LAWS.
    pub spatial_h_s: Option<f64>,
    pub napa_field: Option<WeightField>,
    /// One entry per requested method, in request order.
    pub decisions: Vec<DecisionSet>,
}

impl Analysis {
    pub fn decision(&self, method: Method) -> Option<&DecisionSet> {
        self.decisions.iter().find(|d| d.method == method)
    }
}

/// Runs every requested procedure on one set of site statistics.
pub fn run_methods(stats: &SiteStatistics, grid: &SpatialGrid, opts: &AnalysisOptions) -> Result<Analysis> {
    check_alpha(opts.alpha)?;
    if stats.len() != grid.len() {
        return Err(Error::DimensionMismatch("statistics vs grid".into()));
    }
    if !(opts.xi > 0.0 && opts.xi < 0.5) {
        return Err(invalid("xi", "must lie in (0, 0.5)"));
    }
    let tau = match opts.tau {
        Some(t) if t > 0.0 && t < 1.0 => t,
        Some(_) => return Err(invalid("tau", "must lie in (0,1)")),
        None => weights::select_tau(&stats.p_value, weights::DEFAULT_SCREEN_LEVEL)?,
    };
    let wants = |m: Method| opts.methods.contains(&m);
    let needs_joint = wants(Method::Napa);
    let needs_spatial = wants(Method::Laws) || wants(Method::GapThenLaws);

    let bandwidth = if needs_joint {
        Some(match (opts.h_s, opts.h_u) {
            (Some(h_s), Some(h_u)) => {
                let rho = match opts.rho {
                    Some(r) => r,
                    None => weights::estimate_rho(grid, &stats.u_stat, opts.cv.max_pairs, opts.seed),
                };
                BandwidthMatrix::new(h_s, h_u, rho)?
            }
            _ => {
                let cv = CvOptions {
                    fixed_hs: opts.h_s,
                    fixed_hu: opts.h_u,
                    fixed_rho: opts.rho,
                    ..opts.cv.clone()
                };
                weights::select_bandwidths_with(&stats.p_value, &stats.u_stat, grid, tau, &cv, opts.seed)?.bandwidth
            }
        })
    } else {
        None
    };
    let spatial_h_s = if needs_spatial {
        Some(match opts.h_s {
            Some(h) => h,
            None => weights::select_spatial_bandwidth(&stats.p_value, grid, tau, &opts.cv)?.0,
        })
    } else {
        None
    };
    // rho and h_u are unused by the space-only kernel
    let spatial_bw = spatial_h_s.map(|h| BandwidthMatrix::new(h, 1.0, 0.0)).transpose()?;

    let mut napa_field = None;
    let mut decisions = Vec::with_capacity(opts.methods.len());
    for &method in &opts.methods {
        let d = match method {
            Method::Napa => {
                let bw = bandwidth.as_ref().expect("joint bandwidth selected");
                let field = weights::estimate_pi_tau(stats, grid, tau, bw, opts.xi, false)?;
                let d = napa_with_weights(stats, &field, opts.alpha)?;
                napa_field = Some(field);
                d
            }
            Method::Laws => {
                let bw = spatial_bw.as_ref().expect("spatial bandwidth selected");
                laws_on(
                    &stats.p_value,
                    &stats.u_stat,
                    grid,
                    opts.alpha,
                    tau,
                    bw,
                    opts.xi,
                    Method::Laws,
                )?
            }
            Method::Bh => bh_procedure(&stats.p_value, opts.alpha)?,
            Method::GapLite => {
                let groups = gap_groups(&stats.p_value, &stats.u_stat, tau, opts.gap_groups, opts.xi)?;
                let (pw, site_pi) = gap_weighted(&stats.p_value, &groups);
                threshold_with_method(Method::GapLite, &pw, &site_pi, opts.alpha)?
            }
            Method::GapThenLaws => {
                let bw = spatial_bw.as_ref().expect("spatial bandwidth selected");
                let groups = gap_groups(&stats.p_value, &stats.u_stat, tau, opts.gap_groups, opts.xi)?;
                let (pw, _) = gap_weighted(&stats.p_value, &groups);
                laws_on(
                    &pw,
                    &stats.u_stat,
                    grid,
                    opts.alpha,
                    tau,
                    bw,
                    opts.xi,
                    Method::GapThenLaws,
                )?
            }
        };
        decisions.push(d);
    }
    Ok(Analysis {
        tau,
        bandwidth,
        spatial_h_s,
        napa_field,
        decisions,
    })
}
