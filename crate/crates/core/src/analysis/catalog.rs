//! Closed-form bias and variance of the estimator catalog against Monte Carlo.

use crate::error::Result;
use crate::optim::{Algorithm, OptimizerConfig, OptimizerState};
use crate::problems::{NoisyQuadratic, StochasticProblem};
use crate::rng::{stream, Purpose};

use super::estimator::{
    adam_variance, affine_raw_moments, bcos_c_bias, bcos_c_variance, ema_variance, estimator_stats,
    variance_of_square,
};
use super::report::{Check, Report};

/// Inputs of the catalog check. `expected_beta`, when set, replaces the true
/// smoothing factors inside the closed forms (a negative control).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogFixture {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub n_mc: usize,
    pub seed: u64,
    pub expected_beta: Option<f64>,
}

impl Default for CatalogFixture {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            n_mc: 100_000,
            seed: 0,
            expected_beta: None,
        }
    }
}

const X: [f64; 3] = [1.0, 0.0, 1.0];
const M_PREV: [f64; 3] = [0.3, -1.2, 2.5];
const V_PREV: [f64; 3] = [1.5, 4.0, 0.2];

fn fixture_problem() -> Result<NoisyQuadratic> {
    let p = crate::vector::BlockPartition::singletons(3)?;
    NoisyQuadratic::new(
        vec![1.0, 2.0, 0.5],
        vec![1.0, 0.5, 2.0],
        vec![0.5, -1.0, 2.0],
        std::sync::Arc::new(p),
    )
}

fn state(m: bool, v: bool) -> OptimizerState {
    OptimizerState {
        m: m.then(|| M_PREV.to_vec()),
        v: v.then(|| V_PREV.to_vec()),
        t: 10,
        initialized: true,
    }
}

/// Monte Carlo bias and variance of each estimator at a fixed state on a
/// three-coordinate Gaussian quadratic, each compared with its closed form
/// within three standard errors per coordinate.
pub fn estimator_catalog(fx: &CatalogFixture) -> Result<Report> {
    let problem = fixture_problem()?;
    let gm = problem
        .grad_moments(&X)
        .expect("quadratic has exact moments");
    let var_g_sq = gm.variance_of_square();
    let eb1 = fx.expected_beta.unwrap_or(fx.beta1);
    let eb2 = fx.expected_beta.unwrap_or(fx.beta2);
    let mut report = Report::new("estimator bias and variance catalog");
    report.note(format!(
        "x = {X:?}, m_prev = {M_PREV:?}, v_prev = {V_PREV:?}, beta1 = {}, beta2 = {}, n_mc = {}",
        fx.beta1, fx.beta2, fx.n_mc
    ));
    if let Some(b) = fx.expected_beta {
        report.note(format!("closed forms evaluated with beta = {b}"));
    }
    let mut rng = stream(fx.seed, 0, Purpose::MonteCarlo);
    let cfg = |alg| {
        OptimizerConfig::new(alg)
            .with_betas(fx.beta1, fx.beta2)
            .with_epsilon(fx.epsilon)
    };
    let mut run = |c: &OptimizerConfig, s: &OptimizerState| {
        estimator_stats(&problem, &X, s, c, fx.n_mc, fx.epsilon, &mut rng)
    };

    // EMA of g²
    let s = run(&cfg(Algorithm::BcosG), &state(false, true))?;
    for i in 0..3 {
        report.push(Check::equal(
            format!("EMA of g^2: Var(v) coordinate {i}"),
            s.variance[i],
            ema_variance(eb1, var_g_sq[i]),
            3.0 * s.variance_se[i],
        ));
    }

    // EMA of m²
    let s = run(&cfg(Algorithm::BcosM), &state(true, true))?;
    for i in 0..3 {
        let raw = [gm.mean[i], gm.second[i], gm.third[i], gm.fourth[i]];
        let m = affine_raw_moments(fx.beta1 * M_PREV[i], 1.0 - fx.beta1, raw);
        report.push(Check::equal(
            format!("EMA of m^2: Var(v) coordinate {i}"),
            s.variance[i],
            ema_variance(eb2, variance_of_square(m)),
            3.0 * s.variance_se[i],
        ));
    }

    let s = run(&cfg(Algorithm::Adam), &state(true, true))?;
    for i in 0..3 {
        report.push(Check::equal(
            format!("Adam: Var(v) coordinate {i}"),
            s.variance[i],
            adam_variance(eb2, var_g_sq[i]),
            3.0 * s.variance_se[i],
        ));
    }

    let s = run(&cfg(Algorithm::BcosC), &state(true, false))?;
    for i in 0..3 {
        report.push(Check::equal(
            format!("conditional: Var(v) coordinate {i}"),
            s.variance[i],
            bcos_c_variance(eb1, var_g_sq[i]),
            3.0 * s.variance_se[i],
        ));
        report.push(Check::equal(
            format!("conditional: bias coordinate {i}"),
            s.bias[i],
            bcos_c_bias(eb1, M_PREV[i], gm.mean[i]),
            3.0 * s.bias_se[i],
        ));
    }

    let s = run(&cfg(Algorithm::SignSgd), &state(false, false))?;
    for i in 0..3 {
        report.push(Check::equal(
            format!("sign estimator v = d^2: bias coordinate {i}"),
            s.bias[i],
            0.0,
            3.0 * s.bias_se[i],
        ));
    }

    let s = run(&cfg(Algorithm::Sgd), &state(false, false))?;
    for i in 0..3 {
        report.push(Check::equal(
            format!("constant estimator: Var(v) coordinate {i}"),
            s.variance[i],
            0.0,
            0.0,
        ));
    }
    Ok(report)
}
