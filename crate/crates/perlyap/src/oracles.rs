//! Closed-form references used to validate the simulator and estimators.
//!
//! The centerpiece is the two-sided Wiener supremum distribution
//!
//! ```text
//! P(sup_{0<=t<=T} |w(t)| >= c)
//!   = erfc(c / sqrt(2T))
//!   + (1/sqrt(2 pi T)) sum_{k != 0} (-1)^(k+1)
//!       int_{(2k-1)c}^{(2k+1)c} exp(-u^2 / 2T) du
//! ```
//!
//! evaluated with the Gaussian interval integrals expressed as differences
//! of the standard normal survival function (avoiding cancellation), plus
//! the alternating-series truncation bound.

use crate::special::{erfc, normal_sf};
use crate::{Error, Result};

const MAX_TERMS: u32 = 10_000;

/// A truncated series evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SeriesResult {
    /// Clipped to `[0, 1]`.
    pub value: f64,
    pub terms_used: u32,
    /// Magnitude of the first omitted term (alternating-series bound).
    pub truncation_error_estimate: f64,
}

/// `P(sup_{0<=t<=T} |w(t)| >= c)` for a standard Wiener process.
///
/// Terms are added until the next term's magnitude drops below `tol`.
pub fn brownian_sup_prob(c: f64, t_final: f64, tol: f64) -> Result<SeriesResult> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Config(format!("threshold c must be positive, got {c}")));
    }
    if !t_final.is_finite() || t_final <= 0.0 {
        return Err(Error::Config(format!("horizon T must be positive, got {t_final}")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let x = c / t_final.sqrt();
    // Leading term: erfc(c / sqrt(2T)) = 2 * Phi_bar(x).
    let mut value = erfc(c / (2.0 * t_final).sqrt());
    let mut terms_used = 0;
    let mut truncation = 0.0;
    for k in 1..=MAX_TERMS {
        // The +/-k interval integrals are equal by symmetry, so each k
        // contributes twice the one-sided Gaussian mass of
        // [(2k-1)c, (2k+1)c], with alternating sign.
        let term =
            2.0 * (normal_sf((2.0 * k as f64 - 1.0) * x) - normal_sf((2.0 * k as f64 + 1.0) * x));
        let signed = if k % 2 == 1 { term } else { -term };
        truncation = term.abs();
        if truncation < tol {
            terms_used = k - 1;
            break;
        }
        value += signed;
        terms_used = k;
        if k == MAX_TERMS {
            return Err(Error::NonConvergence(format!(
                "supremum series did not reach tolerance {tol:e} within {MAX_TERMS} terms"
            )));
        }
    }
    Ok(SeriesResult { value: value.clamp(0.0, 1.0), terms_used, truncation_error_estimate: truncation })
}

/// Intensity threshold for the pure-noise system `dy = mu dw`, `y0 = 0`,
/// with quadratic certificate: for all `mu` below the returned value,
/// `P(sup_{0<=t<=mu^(-2+kappa)} |y| >= epsilon) <= nu`.
///
/// Closed form: `(epsilon^2 / |4 ln(nu / sqrt(8))|)^(1/kappa)`.
pub fn example1_threshold(epsilon: f64, nu: f64, kappa: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let sqrt8 = 8f64.sqrt();
    if nu.is_nan() || nu <= 0.0 || nu >= sqrt8 {
        return Err(Error::Domain(format!(
            "nu must lie in (0, sqrt(8)) for the logarithm to be negative, got {nu}"
        )));
    }
    if kappa.is_nan() || kappa <= 0.0 || kappa >= 1.0 {
        return Err(Error::Config(format!("kappa must lie in (0,1), got {kappa}")));
    }
    let log_term = (nu / sqrt8).ln().abs();
    Ok((epsilon * epsilon / (4.0 * log_term)).powf(1.0 / kappa))
}

/// Mean and variance of `dy = -theta y dt + mu dw` at time `t` from `y0`:
/// `(y0 e^(-theta t), mu^2 (1 - e^(-2 theta t)) / (2 theta))`.
pub fn ou_moments(theta: f64, mu: f64, t: f64, y0: f64) -> Result<(f64, f64)> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(Error::Config(format!("theta must be positive, got {theta}")));
    }
    if t < 0.0 {
        return Err(Error::Config("time must be nonnegative".into()));
    }
    let mean = y0 * (-theta * t).exp();
    let variance = mu * mu * (1.0 - (-2.0 * theta * t).exp()) / (2.0 * theta);
    Ok((mean, variance))
}
