//! Per-site two-sample statistics.
//!
//! For every site the primary statistic is the studentized mean difference
//!
//! ```text
//! T = (Ybar1 - Ybar2) / sqrt(s1^2/n1 + s2^2/n2)
//! ```
//!
//! and the auxiliary statistic is the studentized weighted sum
//!
//! ```text
//! kappa = (n2 s1^2) / (n1 s2^2)
//! U     = (Ybar1 + kappa Ybar2) / sqrt(s1^2/n1 + kappa^2 s2^2/n2)
//! ```
//!
//! with `s_d^2` the sample variance using divisor `n_d`. The choice of `kappa`
//! makes the covariance between the two numerators vanish, so `U` carries
//! information about whether either mean is non-zero while staying
//! (asymptotically) independent of `T` under the null.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::math;

/// Two groups of observations on a common grid. Matrices are row-major,
/// one row per subject and one column per site.
#[derive(Debug, Clone)]
pub struct TwoSampleDataset<'g> {
    grid: &'g SpatialGrid,
    group1: Vec<f64>,
    group2: Vec<f64>,
    n1: usize,
    n2: usize,
}

impl<'g> TwoSampleDataset<'g> {
    pub fn new(grid: &'g SpatialGrid, group1: Vec<f64>, group2: Vec<f64>) -> Result<Self> {
        let m = grid.len();
        for (g, data) in [(1u8, &group1), (2u8, &group2)] {
            if data.len() % m != 0 {
                return Err(Error::DimensionMismatch(format!(
                    "group {g} has {} values, not a multiple of {m} sites",
                    data.len()
                )));
            }
            let rows = data.len() / m;
            if rows < 2 {
                return Err(Error::TooFewSamples { group: g, count: rows });
            }
        }
        let n1 = group1.len() / m;
        let n2 = group2.len() / m;
        Ok(Self {
            grid,
            group1,
            group2,
            n1,
            n2,
        })
    }

    pub fn grid(&self) -> &'g SpatialGrid {
        self.grid
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn group1(&self) -> &[f64] {
        &self.group1
    }

    pub fn group2(&self) -> &[f64] {
        &self.group2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteStatistics {
    pub n1: usize,
    pub n2: usize,
    pub mean1: Vec<f64>,
    pub mean2: Vec<f64>,
    pub var1: Vec<f64>,
    pub var2: Vec<f64>,
    pub kappa_hat: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub u_stat: Vec<f64>,
    pub p_value: Vec<f64>,
}

impl SiteStatistics {
    pub fn len(&self) -> usize {
        self.p_value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_value.is_empty()
    }

    /// Builds the statistics from per-site group means and variances
    /// (divisor `n_d`).
    pub fn from_moments(
        n1: usize,
        n2: usize,
        mean1: Vec<f64>,
        mean2: Vec<f64>,
        var1: Vec<f64>,
        var2: Vec<f64>,
    ) -> Result<Self> {
        let m = mean1.len();
        if mean2.len() != m || var1.len() != m || var2.len() != m {
            return Err(Error::DimensionMismatch("moment vectors differ in length".into()));
        }
        for (group, n) in [(1u8, n1), (2u8, n2)] {
            if n < 2 {
                return Err(Error::TooFewSamples { group, count: n });
            }
        }
        for s in 0..m {
            if !(var1[s] > 0.0) {
                return Err(Error::ZeroVariance { group: 1, site: s });
            }
            if !(var2[s] > 0.0) {
                return Err(Error::ZeroVariance { group: 2, site: s });
            }
        }
        let (n1f, n2f) = (n1 as f64, n2 as f64);
        let mut kappa_hat = vec![0.0; m];
        let mut t_stat = vec![0.0; m];
        let mut u_stat = vec![0.0; m];
        let mut p_value = vec![0.0; m];
        for s in 0..m {
            let (v1, v2) = (var1[s], var2[s]);
            let kappa = (n2f * v1) / (n1f * v2);
            let t = (mean1[s] - mean2[s]) / math::sqrt(v1 / n1f + v2 / n2f);
            let u = (mean1[s] + kappa * mean2[s]) / math::sqrt(v1 / n1f + kappa * kappa * v2 / n2f);
            kappa_hat[s] = kappa;
            t_stat[s] = t;
            u_stat[s] = u;
            p_value[s] = math::pvalue(t);
        }
        Ok(Self {
            n1,
            n2,
            mean1,
            mean2,
            var1,
            var2,
            kappa_hat,
            t_stat,
            u_stat,
            p_value,
        })
    }
}

fn column_moments(data: &[f64], m: usize, group: u8) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = data.len() / m;
    let mut mean = vec![0.0; m];
    for (row, obs) in data.chunks_exact(m).enumerate() {
        for (site, (acc, &y)) in mean.iter_mut().zip(obs).enumerate() {
            if !y.is_finite() {
                return Err(Error::NonFiniteObservation { group, row, site });
            }
            *acc += y;
        }
    }
    let nf = n as f64;
    mean.iter_mut().for_each(|x| *x /= nf);
    let mut var = vec![0.0; m];
    for obs in data.chunks_exact(m) {
        for ((acc, &y), &mu) in var.iter_mut().zip(obs).zip(&mean) {
            let d = y - mu;
            *acc += d * d;
        }
    }
    var.iter_mut().for_each(|x| *x /= nf);
    Ok((mean, var))
}

/// Group means, variances, `kappa_hat`, `T`, `U` and two-sided normal
/// p-values at every site.
pub fn compute_site_statistics(data: &TwoSampleDataset<'_>) -> Result<SiteStatistics> {
    let m = data.grid.len();
    let (mean1, var1) = column_moments(&data.group1, m, 1)?;
    let (mean2, var2) = column_moments(&data.group2, m, 2)?;
    SiteStatistics::from_moments(data.n1, data.n2, mean1, mean2, var1, var2)
}
