use serde::Serialize;

use crate::error::{Error, Result};

use super::estimator::EstimatorStats;

/// Leading-order `σ_t` with the size of the truncated terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaBreakdown {
    pub value: f64,
    /// `τ / 2`.
    pub tau_term: f64,
    /// `max_i |½ Corr(d, v) / √(SNR_d SNR_v)|` over coordinates with `E d ≠ 0`.
    pub correlation_term: f64,
    /// `1/√(1−τ) − 1 − τ/2`: the dropped higher powers of `τ`.
    pub tau_truncation: f64,
    /// `max_i 3 / (8 SNR_v)`: the dropped variance term of the ratio expansion.
    pub snr_truncation: f64,
}

/// `τ/2 + (1 + τ/2) · max_i |½ Corr(d_i, v_i) / √(SNR_d,i · SNR_v,i)|`.
///
/// Coordinates with `E[d_i] = 0` carry zero weight and are skipped. An
/// infinite SNR makes that coordinate's term zero.
pub fn sigma_t_leading(stats: &EstimatorStats, tau: f64) -> Result<SigmaBreakdown> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::param(
            "tau",
            format!("must lie in [0, 1), got {tau}"),
        ));
    }
    let n = stats.mean_d.len();
    for len in [stats.corr_dv.len(), stats.snr_d.len(), stats.snr_v.len()] {
        crate::error::ensure_len(n, len)?;
    }
    let mut corr_term: f64 = 0.0;
    let mut snr_trunc: f64 = 0.0;
    for i in 0..n {
        if stats.mean_d[i] == 0.0 {
            continue;
        }
        let corr = stats.corr_dv[i];
        if !corr.is_finite() {
            return Err(Error::Undefined(format!(
                "correlation of d and v at coordinate {i}"
            )));
        }
        let snr = stats.snr_d[i] * stats.snr_v[i];
        let term = if snr.is_infinite() || corr == 0.0 {
            0.0
        } else {
            (0.5 * corr / snr.sqrt()).abs()
        };
        corr_term = corr_term.max(term);
        snr_trunc = snr_trunc.max(3.0 / (8.0 * stats.snr_v[i]));
    }
    let tau_term = 0.5 * tau;
    Ok(SigmaBreakdown {
        value: tau_term + (1.0 + tau_term) * corr_term,
        tau_term,
        correlation_term: corr_term,
        tau_truncation: 1.0 / (1.0 - tau).sqrt() - 1.0 - tau_term,
        snr_truncation: snr_trunc,
    })
}

/// `δ = 2√n (σ + ε_term) / λ`.
pub fn neighborhood_radius(sigma_bound: f64, eps_term: f64, lambda: f64, n: usize) -> Result<f64> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::param(
            "lambda",
            "the neighborhood radius needs lambda > 0; with lambda = 0 a strict aiming margin is required instead",
        ));
    }
    Ok(2.0 * (n as f64).sqrt() * (sigma_bound + eps_term) / lambda)
}
