//! Standard normal helpers.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, evaluated through `erfc` so both tails keep full
/// relative precision.
pub fn normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFinite("x"));
    }
    Ok(cdf(x))
}

/// `2 * (1 - Phi(|t|))`.
pub fn two_sided_pvalue(t: f64) -> Result<f64> {
    if t.is_nan() {
        return Err(Error::NonFinite("t"));
    }
    Ok(pvalue(t))
}

#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn pvalue(t: f64) -> f64 {
    libm::erfc(t.abs() * FRAC_1_SQRT_2).min(1.0)
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

/// Upper quantile `z` with `two_sided_pvalue(z) == p`, for `p` in (0,1].
pub(crate) fn two_sided_critical(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 1.0);
    // bracket then bisect; pvalue is strictly decreasing on [0, inf)
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while pvalue(hi) > p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pvalue(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.exp()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::exp(x)
    }
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.sqrt()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::sqrt(x)
    }
}

#[inline]
pub(crate) fn log(x: f64) -> f64 {
    libm::log(x)
}
