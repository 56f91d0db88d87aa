//! Monte Carlo statistics of second-moment estimators with the optimizer
//! state held fixed, plus closed-form references.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::{advance, Algorithm, BiasCorrection, OptimizerConfig, OptimizerState};
use crate::problems::{GradientMoments, MomentumMomentTracker, StochasticProblem};
use crate::rng::StreamRng;

use super::sigma::sigma_t_leading;

pub const MIN_MC_DRAWS: usize = 10_000;

/// Per-coordinate statistics of the estimator `v_t` and direction `d_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorStats {
    /// Exact `E_t[d]`.
    pub mean_d: Vec<f64>,
    /// Exact `E_t[d²]`.
    pub second_moment_d: Vec<f64>,
    /// Monte Carlo `E[v]`.
    pub mean_v: Vec<f64>,
    /// `|E[v] − E[d²]|`.
    pub bias: Vec<f64>,
    pub bias_se: Vec<f64>,
    /// Monte Carlo `Var(v)`.
    pub variance: Vec<f64>,
    pub variance_se: Vec<f64>,
    /// `E[d]² / Var(d)`.
    pub snr_d: Vec<f64>,
    /// `E[v + ε]² / Var(v)`.
    pub snr_v: Vec<f64>,
    pub corr_dv: Vec<f64>,
    pub tau_hat: f64,
    pub sigma_t: f64,
    pub epsilon: f64,
    pub n_mc: usize,
}

/// Compact per-step diagnostic kept in trajectory records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub tau_hat: f64,
    pub sigma_t: f64,
    pub max_bias: f64,
    pub max_variance: f64,
}

impl EstimatorStats {
    pub fn summary(&self) -> EstimatorSummary {
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        EstimatorSummary {
            tau_hat: self.tau_hat,
            sigma_t: self.sigma_t,
            max_bias: max(&self.bias),
            max_variance: max(&self.variance),
        }
    }
}

/// Gradient moments seen by the optimizer, including folded weight decay.
pub(crate) fn effective_gradient_moments(
    problem: &dyn StochasticProblem,
    x: &[f64],
    config: &OptimizerConfig,
) -> Result<GradientMoments> {
    let gm = problem.grad_moments(x).ok_or(Error::MissingOracle)?;
    let lambda = config.weight_decay_lambda;
    if !config.decoupled && lambda > 0.0 {
        gm.shifted(&x.iter().map(|v| lambda * v).collect::<Vec<_>>())
    } else {
        Ok(gm)
    }
}

/// Exact first and second moments of the (bias-corrected) direction `d_t`.
pub(crate) fn direction_moments(
    config: &OptimizerConfig,
    state: &OptimizerState,
    gm: &GradientMoments,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let alg = config.algorithm;
    if !alg.uses_momentum() || !state.initialized {
        // the first momentum equals the first gradient under both initializations
        return Ok((gm.mean.clone(), gm.second.clone()));
    }
    let m_prev = state
        .m
        .as_deref()
        .ok_or_else(|| Error::Undefined("momentum state is missing".into()))?;
    let mut tr = MomentumMomentTracker::new(config.beta1)?;
    tr.update(m_prev, gm)?;
    let c = match config.bias_correction {
        BiasCorrection::InitFirstSample => 1.0,
        BiasCorrection::ZeroInitRescale => 1.0 - config.beta1.powi((state.t + 1) as i32),
    };
    Ok((
        tr.m_mean().iter().map(|m| m / c).collect(),
        tr.m_second().iter().map(|m| m / (c * c)).collect(),
    ))
}

/// Mean shifted by the first sample, so constant samples give their value exactly.
fn mean(v: &[f64]) -> f64 {
    let x0 = v[0];
    x0 + v.iter().map(|x| x - x0).sum::<f64>() / v.len() as f64
}

/// Draws `n_mc` fresh gradients at `x` with `state` held fixed, forms the
/// estimator and direction of `config` for each draw, and summarizes them.
///
/// Needs singleton blocks and exact gradient moments. Rules without an
/// estimator (SGD and SGD with momentum) use the constant estimator `v = 1`.
pub fn estimator_stats(
    problem: &dyn StochasticProblem,
    x: &[f64],
    state: &OptimizerState,
    config: &OptimizerConfig,
    n_mc: usize,
    epsilon: f64,
    rng: &mut StreamRng,
) -> Result<EstimatorStats> {
    config.validate()?;
    if n_mc < MIN_MC_DRAWS {
        return Err(Error::InsufficientData(format!(
            "estimator statistics need at least {MIN_MC_DRAWS} draws, got {n_mc}"
        )));
    }
    let partition = problem.partition();
    if !partition.is_singletons() {
        return Err(Error::InvalidPartition(
            "estimator statistics are per coordinate and need singleton blocks".into(),
        ));
    }
    let n = partition.dim();
    crate::error::ensure_len(n, x.len())?;
    let gm = effective_gradient_moments(problem, x, config)?;
    let (mean_d, second_moment_d) = direction_moments(config, state, &gm)?;
    if let Some(i) = second_moment_d.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroSecondMoment { block: i });
    }

    let lambda = config.weight_decay_lambda;
    let fold = !config.decoupled && lambda > 0.0;
    let mut ds = vec![Vec::with_capacity(n_mc); n];
    let mut vs = vec![Vec::with_capacity(n_mc); n];
    let mut g = vec![0.0; n];
    for _ in 0..n_mc {
        problem.sample_gradient_into(x, rng, &mut g);
        if fold {
            g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += lambda * xi);
        }
        let (d, v) = if config.algorithm == Algorithm::ConceptualBcos {
            (g.clone(), second_moment_d.clone())
        } else {
            let adv = advance(config, partition, state, &g)?;
            let v = adv.estimate.unwrap_or_else(|| vec![1.0; n]);
            (adv.direction, v)
        };
        for i in 0..n {
            ds[i].push(d[i]);
            vs[i].push(v[i]);
        }
    }

    let nf = n_mc as f64;
    let mut stats = EstimatorStats {
        mean_d: mean_d.clone(),
        second_moment_d: second_moment_d.clone(),
        mean_v: vec![0.0; n],
        bias: vec![0.0; n],
        bias_se: vec![0.0; n],
        variance: vec![0.0; n],
        variance_se: vec![0.0; n],
        snr_d: vec![0.0; n],
        snr_v: vec![0.0; n],
        corr_dv: vec![0.0; n],
        tau_hat: 0.0,
        sigma_t: 0.0,
        epsilon,
        n_mc,
    };
    for i in 0..n {
        let mv = mean(&vs[i]);
        let md = mean(&ds[i]);
        let (mut c2, mut c4, mut cov, mut vd) = (0.0, 0.0, 0.0, 0.0);
        for (v, d) in vs[i].iter().zip(&ds[i]) {
            let dv = v - mv;
            let dd = d - md;
            c2 += dv * dv;
            c4 += dv.powi(4);
            cov += dv * dd;
            vd += dd * dd;
        }
        let var_v = c2 / (nf - 1.0);
        let m2 = c2 / nf;
        let m4 = c4 / nf;
        stats.mean_v[i] = mv;
        stats.bias[i] = (mv - second_moment_d[i]).abs();
        stats.bias_se[i] = (var_v / nf).sqrt();
        stats.variance[i] = var_v;
        stats.variance_se[i] = ((m4 - m2 * m2).max(0.0) / nf).sqrt();
        let var_d_exact = (second_moment_d[i] - mean_d[i] * mean_d[i]).max(0.0);
        stats.snr_d[i] = if var_d_exact == 0.0 {
            f64::INFINITY
        } else {
            mean_d[i] * mean_d[i] / var_d_exact
        };
        stats.snr_v[i] = if var_v == 0.0 {
            f64::INFINITY
        } else {
            (mv + epsilon).powi(2) / var_v
        };
        // zero spread in either variable: no linear association
        stats.corr_dv[i] = if c2 == 0.0 || vd == 0.0 {
            0.0
        } else {
            (cov / (c2.sqrt() * vd.sqrt())).clamp(-1.0, 1.0)
        };
    }
    stats.tau_hat = fit_tau(&stats.bias, &second_moment_d, epsilon)?;
    stats.sigma_t = sigma_t_leading(&stats, stats.tau_hat.min(1.0 - f64::EPSILON))?.value;
    Ok(stats)
}

/// `max_i (bias_i − ε)₊ / E[d_i²]`.
pub fn fit_tau(bias: &[f64], second_moment_d: &[f64], epsilon: f64) -> Result<f64> {
    crate::error::ensure_len(bias.len(), second_moment_d.len())?;
    let mut tau: f64 = 0.0;
    for (i, (b, s)) in bias.iter().zip(second_moment_d).enumerate() {
        if *s <= 0.0 {
            return Err(Error::ZeroSecondMoment { block: i });
        }
        tau = tau.max((b - epsilon).max(0.0) / s);
    }
    Ok(tau)
}

/// Smallest feasible `τ` for each `ε` in `epsilons`.
pub fn tau_frontier(
    bias: &[f64],
    second_moment_d: &[f64],
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>> {
    epsilons
        .iter()
        .map(|&e| fit_tau(bias, second_moment_d, e).map(|t| (e, t)))
        .collect()
}

/// Raw moments `E y^k`, `k = 1..4`, of `y = a + b g` from raw moments of `g`.
pub fn affine_raw_moments(a: f64, b: f64, g: [f64; 4]) -> [f64; 4] {
    let [g1, g2, g3, g4] = g;
    [
        a + b * g1,
        a * a + 2.0 * a * b * g1 + b * b * g2,
        a.powi(3) + 3.0 * a * a * b * g1 + 3.0 * a * b * b * g2 + b.powi(3) * g3,
        a.powi(4)
            + 4.0 * a.powi(3) * b * g1
            + 6.0 * a * a * b * b * g2
            + 4.0 * a * b.powi(3) * g3
            + b.powi(4) * g4,
    ]
}

/// `Var(y²) = E y⁴ − (E y²)²` from raw moments.
pub fn variance_of_square(raw: [f64; 4]) -> f64 {
    (raw[3] - raw[1] * raw[1]).max(0.0)
}

/// EMA estimator with fixed `v_{t−1}`: `Var(v) = (1−β)² Var(d²)`.
pub fn ema_variance(beta: f64, var_d_sq: f64) -> f64 {
    (1.0 - beta).powi(2) * var_d_sq
}

/// EMA estimator bias given `v_{t−1}`: `β |v_{t−1} − E d²|`.
pub fn ema_bias(beta: f64, v_prev: f64, second_moment_d: f64) -> f64 {
    beta * (v_prev - second_moment_d).abs()
}

/// Adam's estimator with fixed `v_{t−1}`: `Var(v) = (1−β₂)² Var(g²)`.
pub fn adam_variance(beta2: f64, var_g_sq: f64) -> f64 {
    (1.0 - beta2).powi(2) * var_g_sq
}

/// Conditional estimator: `Var(v) = (1−β)⁴ Var(g²)`.
pub fn bcos_c_variance(beta: f64, var_g_sq: f64) -> f64 {
    (1.0 - beta).powi(4) * var_g_sq
}

/// Conditional estimator: `|E v − E m²| = 2β(1−β) |m_{t−1}(m_{t−1} − E g)|`.
pub fn bcos_c_bias(beta: f64, m_prev: f64, mean_g: f64) -> f64 {
    2.0 * beta * (1.0 - beta) * (m_prev * (m_prev - mean_g)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::NoisyQuadratic;
    use crate::rng::{stream, Purpose};

    #[test]
    fn affine_moments_reduce_to_identity() {
        let g = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(affine_raw_moments(0.0, 1.0, g), g);
        assert_eq!(affine_raw_moments(2.0, 0.0, g), [2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn too_few_draws_is_an_error() {
        let p = NoisyQuadratic::isotropic(1, 1.0, 1.0, vec![0.0]).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::BcosG);
        let st = OptimizerState::new(cfg.algorithm, p.partition());
        let mut rng = stream(0, 0, Purpose::MonteCarlo);
        assert!(matches!(
            estimator_stats(&p, &[1.0], &st, &cfg, 100, 0.0, &mut rng),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn tau_subtracts_epsilon() {
        assert_eq!(fit_tau(&[0.5, 0.1], &[1.0, 1.0], 0.0).unwrap(), 0.5);
        assert_eq!(fit_tau(&[0.5, 0.1], &[1.0, 1.0], 0.2).unwrap(), 0.3);
        assert_eq!(fit_tau(&[0.5], &[1.0], 1.0).unwrap(), 0.0);
        assert!(fit_tau(&[0.5], &[0.0], 0.0).is_err());
        let f = tau_frontier(&[0.5], &[2.0], &[0.0, 0.5]).unwrap();
        assert_eq!(f, vec![(0.0, 0.25), (0.5, 0.0)]);
    }

    #[test]
    fn conceptual_estimator_is_exact() {
        let p = NoisyQuadratic::isotropic(2, 1.0, 0.5, vec![0.0, 1.0]).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::ConceptualBcos);
        let st = OptimizerState::new(cfg.algorithm, p.partition());
        let mut rng = stream(0, 0, Purpose::MonteCarlo);
        let s = estimator_stats(&p, &[0.3, 0.3], &st, &cfg, 10_000, 0.0, &mut rng).unwrap();
        assert!(s.bias.iter().all(|b| *b == 0.0));
        assert!(s.variance.iter().all(|v| *v == 0.0));
        assert_eq!(s.tau_hat, 0.0);
        assert_eq!(s.sigma_t, 0.0);
    }
}
