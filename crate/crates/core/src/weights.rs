//! Posterior-adjusted weights.
//!
//! The screened non-null probability at a site is estimated by comparing, in a
//! kernel neighborhood over (spatial distance, auxiliary difference), the
//! weighted mass of p-values above a screening level `tau` with the mass
//! expected if every neighbor were null:
//!
//! ```text
//! pi_tau(s) = 1 - sum_{p(s') > tau} v(s, s') / ((1 - tau) sum_{s'} v(s, s'))
//! ```
//!
//! where `v` is a bivariate Gaussian kernel normalized to 1 at the origin.
//! The estimate is clamped into `[xi, 1 - xi]` and converted to odds, which
//! become the p-value weights.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::math;
use crate::par;
use crate::rng::{self, Purpose};
use crate::statistics::SiteStatistics;
use crate::testing::step_up_count;

pub const DEFAULT_XI: f64 = 1e-5;
pub const DEFAULT_SCREEN_LEVEL: f64 = 0.9;
pub const TAU_FALLBACK: f64 = 0.5;

/// Kernel terms with `-q/2` below this exponent are dropped. Each dropped
/// term is below `exp(-18) ~ 1.5e-8`, so a kernel sum over `m` sites is off
/// by at most `m * 1.5e-8`.
pub const KERNEL_EXPONENT_FLOOR: f64 = -18.0;
const Q_MAX: f64 = -2.0 * KERNEL_EXPONENT_FLOOR;

/// 2x2 Gaussian bandwidth `[[h_s^2, rho h_s h_u], [rho h_s h_u, h_u^2]]`
/// acting on `(spatial distance, |u - u'|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthMatrix {
    pub h_s: f64,
    pub h_u: f64,
    pub rho: f64,
}

impl BandwidthMatrix {
    pub fn new(h_s: f64, h_u: f64, rho: f64) -> Result<Self> {
        let bw = Self { h_s, h_u, rho };
        bw.validate()?;
        Ok(bw)
    }

    pub fn validate(&self) -> Result<()> {
        let ok =
            self.h_s.is_finite() && self.h_u.is_finite() && self.h_s > 0.0 && self.h_u > 0.0 && self.rho.abs() < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite {
                h_s: self.h_s,
                h_u: self.h_u,
                rho: self.rho,
            })
        }
    }

    fn form(&self) -> QuadForm {
        QuadForm::new(self.h_s, self.h_u, self.rho)
    }
}

/// `z^T H^{-1} z` for `z = (ds, du)`, expanded.
#[derive(Debug, Clone, Copy)]
struct QuadForm {
    a: f64,
    b2: f64,
    c: f64,
}

impl QuadForm {
    fn new(h_s: f64, h_u: f64, rho: f64) -> Self {
        let det = 1.0 - rho * rho;
        Self {
            a: 1.0 / (h_s * h_s * det),
            b2: -2.0 * rho / (h_s * h_u * det),
            c: 1.0 / (h_u * h_u * det),
        }
    }

    #[inline]
    fn eval(&self, ds: f64, ds2: f64, du: f64) -> f64 {
        self.a * ds2 + self.b2 * ds * du + self.c * du * du
    }
}

/// Gaussian kernel weight `exp(-z^T H^{-1} z / 2)`; equals 1 at the origin.
pub fn kernel_weight(bw: &BandwidthMatrix, ds: f64, du: f64) -> Result<f64> {
    bw.validate()?;
    if !ds.is_finite() || !du.is_finite() {
        return Err(Error::NonFinite("kernel argument"));
    }
    Ok(math::exp(-0.5 * bw.form().eval(ds, ds * ds, du)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub tau: f64,
    pub bandwidth: BandwidthMatrix,
    pub xi: f64,
    pub spatial_only: bool,
    pub pi_tau_hat: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightField {
    pub fn pi_sum(&self) -> f64 {
        self.pi_tau_hat.iter().sum()
    }
}

fn check_pvalues(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::EmptyInput("p-values"));
    }
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(invalid("p-values", "every p-value must lie in [0,1]"));
    }
    Ok(())
}

/// Screening level: the BH cutoff on the raw p-values at `screen_level`
/// (0.9 by default), or 0.5 when that cutoff is not an interior value.
pub fn select_tau(p_values: &[f64], screen_level: f64) -> Result<f64> {
    check_pvalues(p_values)?;
    if !(screen_level > 0.0 && screen_level < 1.0) {
        return Err(invalid("screen_level", "must lie in (0,1)"));
    }
    let mut sorted = p_values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let k = step_up_count(&sorted, m, screen_level);
    if k == 0 {
        return Ok(TAU_FALLBACK);
    }
    let cutoff = sorted[k - 1];
    if cutoff > 0.0 && cutoff < 1.0 {
        Ok(cutoff)
    } else {
        Ok(TAU_FALLBACK)
    }
}

fn check_estimator_inputs(p: &[f64], u: &[f64], grid: &SpatialGrid, tau: f64) -> Result<()> {
    check_pvalues(p)?;
    if p.len() != grid.len() || u.len() != grid.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{} p-values and {} auxiliary values for {} sites",
            p.len(),
            u.len(),
            grid.len()
        )));
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("auxiliary statistic"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau", "must lie in (0,1)"));
    }
    Ok(())
}

/// Kernel sums `(sum over p > tau, sum over all)` at every site.
fn kernel_sums(
    p: &[f64],
    u: &[f64],
    grid: &SpatialGrid,
    tau: f64,
    bw: &BandwidthMatrix,
    spatial_only: bool,
) -> Vec<(f64, f64)> {
    let radius_sq = Q_MAX * bw.h_s * bw.h_s;
    let form = bw.form();
    let inv_hs2 = 1.0 / (bw.h_s * bw.h_s);
    par::map_range(grid.len(), |i| {
        let ui = u[i];
        let (mut above, mut total) = (0.0, 0.0);
        grid.for_each_within(i, radius_sq, |j, ds2| {
            let q = if spatial_only {
                ds2 * inv_hs2
            } else {
                form.eval(math::sqrt(ds2), ds2, (ui - u[j]).abs())
            };
            if q <= Q_MAX {
                let w = math::exp(-0.5 * q);
                total += w;
                above += if p[j] > tau { w } else { 0.0 };
            }
        });
        (above, total)
    })
}

/// Untruncated estimate `1 - above / ((1 - tau) total)` at every site, from
/// raw p-values and auxiliary values.
pub fn raw_pi_tau(
    p: &[f64],
    u: &[f64],
    grid: &SpatialGrid,
    tau: f64,
    bw: &BandwidthMatrix,
    spatial_only: bool,
) -> Result<Vec<f64>> {
    bw.validate()?;
    check_estimator_inputs(p, u, grid, tau)?;
    Ok(kernel_sums(p, u, grid, tau, bw, spatial_only)
        .into_iter()
        .map(|(above, total)| 1.0 - above / ((1.0 - tau) * total))
        .collect())
}

/// Clamps raw estimates into `[xi, 1 - xi]` and attaches odds weights.
pub fn weight_field_from_raw(
    raw: Vec<f64>,
    tau: f64,
    bandwidth: BandwidthMatrix,
    xi: f64,
    spatial_only: bool,
) -> Result<WeightField> {
    if !(xi > 0.0 && xi < 0.5) {
        return Err(invalid("xi", "must lie in (0, 0.5)"));
    }
    let pi_tau_hat: Vec<f64> = raw.into_iter().map(|v| v.max(xi).min(1.0 - xi)).collect();
    let weights = pi_tau_hat.iter().map(|&v| v / (1.0 - v)).collect();
    Ok(WeightField {
        tau,
        bandwidth,
        xi,
        spatial_only,
        pi_tau_hat,
        weights,
    })
}

/// Kernel estimate of the screened posterior non-null probability from raw
/// p-values and auxiliary values. With `spatial_only` the auxiliary
/// coordinate is ignored and the kernel is the univariate Gaussian
/// `exp(-d^2 / 2 h_s^2)`.
pub fn estimate_pi_tau_from(
    p: &[f64],
    u: &[f64],
    grid: &SpatialGrid,
    tau: f64,
    bw: &BandwidthMatrix,
    xi: f64,
    spatial_only: bool,
) -> Result<WeightField> {
    if !(xi > 0.0 && xi < 0.5) {
        return Err(invalid("xi", "must lie in (0, 0.5)"));
    }
    let raw = raw_pi_tau(p, u, grid, tau, bw, spatial_only)?;
    weight_field_from_raw(raw, tau, *bw, xi, spatial_only)
}

pub fn estimate_pi_tau(
    stats: &SiteStatistics,
    grid: &SpatialGrid,
    tau: f64,
    bw: &BandwidthMatrix,
    xi: f64,
    spatial_only: bool,
) -> Result<WeightField> {
    estimate_pi_tau_from(&stats.p_value, &stats.u_stat, grid, tau, bw, xi, spatial_only)
}

/// Search settings for [`select_bandwidths_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub hs_points: usize,
    pub hu_points: usize,
    /// `h_s` spans `[hs_min, hs_max_fraction * max_extent]`.
    pub hs_min: f64,
    pub hs_max_fraction: f64,
    /// `h_u` spans `[hu_min_sd, hu_max_sd] * sd(U)`.
    pub hu_min_sd: f64,
    pub hu_max_sd: f64,
    /// Cross-validation residuals are averaged over at most this many sites,
    /// taken at a fixed stride through the row-major order.
    pub max_targets: usize,
    /// Cap on site pairs used to estimate `rho`.
    pub max_pairs: usize,
    /// Pins a coordinate of the search instead of scanning it.
    pub fixed_hs: Option<f64>,
    pub fixed_hu: Option<f64>,
    pub fixed_rho: Option<f64>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            hs_points: 8,
            hu_points: 8,
            hs_min: 0.5,
            hs_max_fraction: 0.25,
            hu_min_sd: 0.1,
            hu_max_sd: 4.0,
            max_targets: 1000,
            max_pairs: 100_000,
            fixed_hs: None,
            fixed_hu: None,
            fixed_rho: None,
        }
    }
}

/// Outcome of a bandwidth search, including the full score surface
/// (`scores[i * hu_grid.len() + j]` for `hs_grid[i]`, `hu_grid[j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSelection {
    pub bandwidth: BandwidthMatrix,
    pub hs_grid: Vec<f64>,
    pub hu_grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub targets: Vec<usize>,
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![hi.max(lo)];
    }
    let (a, b) = (math::log(lo), math::log(hi));
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                math::exp(a + (b - a) * k as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Log-spaced `h_s` candidates for `grid`.
pub fn hs_search_grid(grid: &SpatialGrid, opts: &CvOptions) -> Vec<f64> {
    let hi = (opts.hs_max_fraction * grid.max_extent() as f64).max(opts.hs_min);
    log_spaced(opts.hs_min, hi, opts.hs_points)
}

pub(crate) fn population_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    math::sqrt(x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx > 0.0 && syy > 0.0 {
        sxy / math::sqrt(sxx * syy)
    } else {
        0.0
    }
}

/// Sample correlation between `||s - s'||` and `|u - u'|`, clipped to
/// `[-0.95, 0.95]`. Uses every pair when there are at most `max_pairs`,
/// otherwise `max_pairs` uniformly drawn pairs of distinct sites.
pub fn estimate_rho(grid: &SpatialGrid, u: &[f64], max_pairs: usize, seed: u64) -> f64 {
    let m = grid.len();
    let all = m * m.saturating_sub(1) / 2;
    let mut ds = Vec::with_capacity(all.min(max_pairs));
    let mut du = Vec::with_capacity(all.min(max_pairs));
    if all <= max_pairs {
        for i in 0..m {
            for j in i + 1..m {
                ds.push(math::sqrt(grid.squared_distance(i, j)));
                du.push((u[i] - u[j]).abs());
            }
        }
    } else {
        let mut rng = rng::stream(seed, Purpose::PairSample, 0, 0);
        for _ in 0..max_pairs {
            let i = rng.random_range(0..m);
            let mut j = rng.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            ds.push(math::sqrt(grid.squared_distance(i, j)));
            du.push((u[i] - u[j]).abs());
        }
    }
    if ds.len() < 2 {
        return 0.0;
    }
    pearson(&ds, &du).clamp(-0.95, 0.95)
}

fn cv_targets(m: usize, max_targets: usize) -> Vec<usize> {
    let stride = m.div_ceil(max_targets.max(1));
    (0..m).step_by(stride.max(1)).collect()
}

fn indicator(p: &[f64], tau: f64) -> Vec<f64> {
    p.iter().map(|&x| if x > tau { 1.0 } else { 0.0 }).collect()
}

/// Picks the minimum score, scanning from the largest bandwidths down and
/// replacing only on a strict (relative 1e-12) improvement, so ties resolve
/// toward the smoothest candidate.
fn argmin_prefer_large(scores: &[f64], n_hs: usize, n_hu: usize) -> (usize, usize) {
    let mut best = (n_hs - 1, n_hu - 1);
    let mut best_score = scores[best.0 * n_hu + best.1];
    for i in (0..n_hs).rev() {
        for j in (0..n_hu).rev() {
            let s = scores[i * n_hu + j];
            if s < best_score - 1e-12 * best_score.abs() {
                best = (i, j);
                best_score = s;
            }
        }
    }
    best
}

/// Leave-one-out squared error of the kernel-weighted neighborhood average
/// of `1{p > tau}`, for one `h_s` and every `h_u` in `hu_grid`.
#[allow(clippy::too_many_arguments)]
fn cv_scores_for_hs(
    y: &[f64],
    u: &[f64],
    grid: &SpatialGrid,
    targets: &[usize],
    h_s: f64,
    hu_grid: &[f64],
    rho: f64,
    fallback: f64,
) -> Vec<f64> {
    let forms: Vec<QuadForm> = hu_grid.iter().map(|&h_u| QuadForm::new(h_s, h_u, rho)).collect();
    let radius_sq = Q_MAX * h_s * h_s;
    let k = hu_grid.len();
    let mut err = vec![0.0; k];
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    for &t in targets {
        num.iter_mut().for_each(|x| *x = 0.0);
        den.iter_mut().for_each(|x| *x = 0.0);
        let ut = u[t];
        grid.for_each_within(t, radius_sq, |j, ds2| {
            if j == t {
                return;
            }
            let ds = math::sqrt(ds2);
            let du = (ut - u[j]).abs();
            for (c, form) in forms.iter().enumerate() {
                let q = form.eval(ds, ds2, du);
                if q <= Q_MAX {
                    let w = math::exp(-0.5 * q);
                    num[c] += w * y[j];
                    den[c] += w;
                }
            }
        });
        for c in 0..k {
            let pred = if den[c] > 0.0 { num[c] / den[c] } else { fallback };
            let r = y[t] - pred;
            err[c] += r * r;
        }
    }
    let n = targets.len() as f64;
    err.into_iter().map(|e| e / n).collect()
}

/// Cross-validated `(h_s, h_u)` with `rho` from the pair correlation, using
/// [`CvOptions::default`].
pub fn select_bandwidths(stats: &SiteStatistics, grid: &SpatialGrid, tau: f64, seed: u64) -> Result<BandwidthMatrix> {
    Ok(select_bandwidths_with(&stats.p_value, &stats.u_stat, grid, tau, &CvOptions::default(), seed)?.bandwidth)
}

pub fn select_bandwidths_with(
    p: &[f64],
    u: &[f64],
    grid: &SpatialGrid,
    tau: f64,
    opts: &CvOptions,
    seed: u64,
) -> Result<BandwidthSelection> {
    check_estimator_inputs(p, u, grid, tau)?;
    let m = grid.len();
    if m < 10 {
        return Err(invalid("sites", "bandwidth selection needs at least 10 sites"));
    }
    let sd_u = population_sd(u);
    if !(sd_u > 0.0) || !sd_u.is_finite() {
        return Err(Error::DegenerateAuxiliary);
    }
    let rho = match opts.fixed_rho {
        Some(r) => r,
        None => estimate_rho(grid, u, opts.max_pairs, seed),
    };
    let hs_grid = match opts.fixed_hs {
        Some(h) => vec![h],
        None => hs_search_grid(grid, opts),
    };
    let hu_grid: Vec<f64> = match opts.fixed_hu {
        Some(h) => vec![h],
        None => log_spaced(opts.hu_min_sd, opts.hu_max_sd, opts.hu_points)
            .into_iter()
            .map(|x| x * sd_u)
            .collect(),
    };
    let y = indicator(p, tau);
    let fallback = y.iter().sum::<f64>() / m as f64;
    let targets = cv_targets(m, opts.max_targets);
    let rows = par::map_range(hs_grid.len(), |i| {
        cv_scores_for_hs(&y, u, grid, &targets, hs_grid[i], &hu_grid, rho, fallback)
    });
    let scores: Vec<f64> = rows.into_iter().flatten().collect();
    let (bi, bj) = argmin_prefer_large(&scores, hs_grid.len(), hu_grid.len());
    Ok(BandwidthSelection {
        bandwidth: BandwidthMatrix::new(hs_grid[bi], hu_grid[bj], rho)?,
        hs_grid,
        hu_grid,
        scores,
        targets,
    })
}

/// Cross-validated spatial bandwidth for the space-only (LAWS-style)
/// estimator; same criterion as [`select_bandwidths_with`] with the
/// auxiliary coordinate dropped. Returns `(h_s, scores)`.
pub fn select_spatial_bandwidth(p: &[f64], grid: &SpatialGrid, tau: f64, opts: &CvOptions) -> Result<(f64, Vec<f64>)> {
    check_pvalues(p)?;
    if p.len() != grid.len() {
        return Err(Error::DimensionMismatch("p-values vs grid".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("tau", "must lie in (0,1)"));
    }
    let m = grid.len();
    if m < 10 {
        return Err(invalid("sites", "bandwidth selection needs at least 10 sites"));
    }
    let hs_grid = match opts.fixed_hs {
        Some(h) => vec![h],
        None => hs_search_grid(grid, opts),
    };
    let y = indicator(p, tau);
    let fallback = y.iter().sum::<f64>() / m as f64;
    let targets = cv_targets(m, opts.max_targets);
    let scores = par::map_range(hs_grid.len(), |i| {
        let h = hs_grid[i];
        let inv = 1.0 / (h * h);
        let mut err = 0.0;
        for &t in &targets {
            let (mut num, mut den) = (0.0, 0.0);
            grid.for_each_within(t, Q_MAX * h * h, |j, ds2| {
                if j != t {
                    let w = math::exp(-0.5 * ds2 * inv);
                    num += w * y[j];
                    den += w;
                }
            });
            let pred = if den > 0.0 { num / den } else { fallback };
            err += (y[t] - pred) * (y[t] - pred);
        }
        err / targets.len() as f64
    });
    let (bi, _) = argmin_prefer_large(&scores, hs_grid.len(), 1);
    Ok((hs_grid[bi], scores))
}

/// Posterior non-null probability when the auxiliary statistic is
/// `N(0, 1)` under the null and `N(delta, 1)` otherwise.
pub fn oracle_posterior(pi_s: f64, u: f64, delta: f64) -> Result<f64> {
    if !pi_s.is_finite() || !u.is_finite() || !delta.is_finite() {
        return Err(Error::NonFinite("oracle posterior input"));
    }
    if !(pi_s > 0.0 && pi_s < 1.0) {
        return Err(invalid("pi_s", "must lie in (0,1)"));
    }
    // log of pi q1 / ((1 - pi) q0)
    let logit = math::log(pi_s / (1.0 - pi_s)) + u * delta - 0.5 * delta * delta;
    Ok(if logit >= 0.0 {
        1.0 / (1.0 + math::exp(-logit))
    } else {
        let e = math::exp(logit);
        e / (1.0 + e)
    })
}
