//! Optimizer step rules.
//!
//! Every rule has the shape `x <- x - alpha_t * d_t / denom(v_t)`, where the
//! search direction `d_t` is the stochastic gradient or its momentum and `v_t`
//! estimates the conditional second moment of `d_t` per block. In singleton
//! block mode this is the familiar coordinatewise form.

mod oracle;
pub mod trace;

pub use oracle::{conceptual_step, optimal_stepsizes, sif, MomentOracle};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::vector::{sign, BlockPartition, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    SgdMomentum,
    SignSgd,
    SignMomentum,
    /// RMSprop form: EMA of `g^2`.
    BcosG,
    /// Momentum direction, EMA of `m^2`.
    BcosM,
    /// Momentum direction, conditional estimator (no stored `v`).
    BcosC,
    Adam,
    /// Exact conditional second moments in the denominator; needs an oracle.
    ConceptualBcos,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Sgd,
        Algorithm::SgdMomentum,
        Algorithm::SignSgd,
        Algorithm::SignMomentum,
        Algorithm::BcosG,
        Algorithm::BcosM,
        Algorithm::BcosC,
        Algorithm::Adam,
        Algorithm::ConceptualBcos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::SgdMomentum => "sgd_momentum",
            Algorithm::SignSgd => "sign_sgd",
            Algorithm::SignMomentum => "sign_momentum",
            Algorithm::BcosG => "bcos_g",
            Algorithm::BcosM => "bcos_m",
            Algorithm::BcosC => "bcos_c",
            Algorithm::Adam => "adam",
            Algorithm::ConceptualBcos => "conceptual_bcos",
        }
    }

    /// Whether the search direction is the momentum `m_t`.
    pub fn uses_momentum(self) -> bool {
        matches!(
            self,
            Algorithm::SgdMomentum
                | Algorithm::SignMomentum
                | Algorithm::BcosM
                | Algorithm::BcosC
                | Algorithm::Adam
        )
    }

    /// Whether a second-moment EMA `v` is kept between steps.
    pub fn stores_second_moment(self) -> bool {
        matches!(self, Algorithm::BcosG | Algorithm::BcosM | Algorithm::Adam)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::param("algorithm", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonPlacement {
    /// `d / (sqrt(v) + eps)`
    #[default]
    OutsideSqrt,
    /// `d / sqrt(v + eps)`
    InsideSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiasCorrection {
    /// `m_{-1} = g_0`, `v_{-1} = g_0^2` (or `m_{-1}^2`).
    #[default]
    InitFirstSample,
    /// Zero state, rescaled by `1 / (1 - beta^(t+1))`.
    ZeroInitRescale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// Momentum factor; the EMA factor of `v` for `bcos_g`.
    pub beta1: f64,
    /// EMA factor of `v` for `bcos_m` and `adam`.
    pub beta2: f64,
    pub epsilon: f64,
    pub epsilon_placement: EpsilonPlacement,
    pub weight_decay_lambda: f64,
    pub decoupled: bool,
    pub bias_correction: BiasCorrection,
    /// `bcos_c` only: use the estimator with the `m_{t-1} * m_t` cross term.
    pub conditional_full: bool,
    /// Diagnostic only: divide by `v + eps` instead of a square root.
    pub no_sqrt_diagnostic: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::BcosC,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-6,
            epsilon_placement: EpsilonPlacement::OutsideSqrt,
            weight_decay_lambda: 0.0,
            decoupled: false,
            bias_correction: BiasCorrection::InitFirstSample,
            conditional_full: false,
            no_sqrt_diagnostic: false,
        }
    }
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_weight_decay(mut self, lambda: f64, decoupled: bool) -> Self {
        self.weight_decay_lambda = lambda;
        self.decoupled = decoupled;
        self
    }

    pub fn with_bias_correction(mut self, bias_correction: BiasCorrection) -> Self {
        self.bias_correction = bias_correction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::param(
                "beta1",
                format!("must lie in [0, 1), got {}", self.beta1),
            ));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param(
                "beta2",
                format!("must lie in [0, 1), got {}", self.beta2),
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(
                "epsilon",
                format!("must be finite and nonnegative, got {}", self.epsilon),
            ));
        }
        if !(self.weight_decay_lambda >= 0.0 && self.weight_decay_lambda.is_finite()) {
            return Err(Error::param(
                "weight_decay",
                format!(
                    "must be finite and nonnegative, got {}",
                    self.weight_decay_lambda
                ),
            ));
        }
        if self.conditional_full && self.algorithm != Algorithm::BcosC {
            return Err(Error::param("conditional_full", "only applies to bcos_c"));
        }
        Ok(())
    }
}

/// Persistent optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Momentum, one entry per coordinate.
    pub m: Option<Vec<f64>>,
    /// Second-moment EMA, one entry per block.
    pub v: Option<Vec<f64>>,
    /// Number of completed steps.
    pub t: u64,
    pub initialized: bool,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, partition: &BlockPartition) -> Self {
        Self {
            m: algorithm
                .uses_momentum()
                .then(|| vec![0.0; partition.dim()]),
            v: algorithm
                .stores_second_moment()
                .then(|| vec![0.0; partition.num_blocks()]),
            t: 0,
            initialized: false,
        }
    }

    /// Number of vectors persisted between steps.
    pub fn stored_vectors(&self) -> usize {
        usize::from(self.m.is_some()) + usize::from(self.v.is_some())
    }

    /// Number of `f64` values persisted between steps.
    pub fn stored_values(&self) -> usize {
        self.m.as_ref().map_or(0, Vec::len) + self.v.as_ref().map_or(0, Vec::len)
    }
}

/// Quantities produced by one step before `x` is touched.
#[derive(Debug, Clone)]
pub(crate) struct Advance {
    /// Search direction after bias correction.
    pub direction: Vec<f64>,
    /// Second-moment estimate per block (after bias correction). `None` for
    /// rules without an estimator (plain SGD, SGD with momentum).
    pub estimate: Option<Vec<f64>>,
    pub next: OptimizerState,
}

pub struct Optimizer {
    config: OptimizerConfig,
    partition: Arc<BlockPartition>,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, partition: Arc<BlockPartition>) -> Result<Self> {
        config.validate()?;
        let state = OptimizerState::new(config.algorithm, &partition);
        Ok(Self {
            config,
            partition,
            state,
        })
    }

    pub fn with_state(
        config: OptimizerConfig,
        partition: Arc<BlockPartition>,
        state: OptimizerState,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(m) = &state.m {
            ensure_len(partition.dim(), m.len())?;
        }
        if let Some(v) = &state.v {
            ensure_len(partition.num_blocks(), v.len())?;
        }
        Ok(Self {
            config,
            partition,
            state,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn into_state(self) -> OptimizerState {
        self.state
    }

    pub fn step(&mut self, x: &mut ParamVector, g: &ParamVector, alpha_t: f64) -> Result<()> {
        ensure_len(self.partition.dim(), x.len())?;
        let mut err = None;
        x.update(|values| {
            if let Err(e) = self.step_slice(values, g, alpha_t) {
                err = Some(e);
            }
        })?;
        err.map_or(Ok(()), Err)
    }

    /// Same as [`Optimizer::step`] on raw slices. On error neither `x` nor
    /// the state is modified.
    pub fn step_slice(&mut self, x: &mut [f64], g: &[f64], alpha_t: f64) -> Result<()> {
        let cfg = &self.config;
        if cfg.algorithm == Algorithm::ConceptualBcos {
            return Err(Error::param(
                "algorithm",
                "conceptual_bcos needs a moment oracle; use conceptual_step",
            ));
        }
        ensure_len(self.partition.dim(), x.len())?;
        ensure_len(self.partition.dim(), g.len())?;
        ensure_finite(g)?;
        if !(alpha_t >= 0.0 && alpha_t.is_finite()) {
            return Err(Error::param(
                "alpha_t",
                format!("must be finite and nonnegative, got {alpha_t}"),
            ));
        }
        let lambda = cfg.weight_decay_lambda;
        if cfg.decoupled && alpha_t * lambda >= 1.0 {
            return Err(Error::DecayTooLarge(alpha_t * lambda));
        }

        let folded;
        let g = if !cfg.decoupled && lambda > 0.0 {
            folded = g
                .iter()
                .zip(x.iter())
                .map(|(gi, xi)| gi + lambda * xi)
                .collect::<Vec<_>>();
            &folded[..]
        } else {
            g
        };

        let adv = advance(cfg, &self.partition, &self.state, g)?;
        let mut next_x = x.to_vec();
        if cfg.decoupled && lambda > 0.0 {
            let shrink = 1.0 - alpha_t * lambda;
            next_x.iter_mut().for_each(|xi| *xi *= shrink);
        }
        apply_direction(cfg, &self.partition, &mut next_x, &adv, alpha_t);
        ensure_finite(&next_x)?;
        x.copy_from_slice(&next_x);
        self.state = adv.next;
        Ok(())
    }
}

fn rescale_factor(cfg: &OptimizerConfig, beta: f64, t: u64) -> f64 {
    match cfg.bias_correction {
        BiasCorrection::InitFirstSample => 1.0,
        BiasCorrection::ZeroInitRescale => 1.0 - beta.powi((t + 1).min(i32::MAX as u64) as i32),
    }
}

/// Computes the direction, the second-moment estimate and the next state from
/// the current state and one gradient sample. Pure: the caller's state is not
/// modified.
pub(crate) fn advance(
    cfg: &OptimizerConfig,
    partition: &BlockPartition,
    state: &OptimizerState,
    g: &[f64],
) -> Result<Advance> {
    let n = partition.dim();
    ensure_len(n, g.len())?;
    let first = !state.initialized;
    let init_sample = cfg.bias_correction == BiasCorrection::InitFirstSample;
    let t = state.t;
    let alg = cfg.algorithm;

    let m_prev: Option<Vec<f64>> = if alg.uses_momentum() {
        Some(match (first, init_sample) {
            (true, true) => g.to_vec(),
            (true, false) => vec![0.0; n],
            _ => state
                .m
                .clone()
                .ok_or_else(|| Error::Undefined("momentum state is missing".into()))?,
        })
    } else {
        None
    };
    let momentum = |beta: f64| -> Vec<f64> {
        let mp = m_prev.as_deref().unwrap_or(g);
        mp.iter()
            .zip(g)
            .map(|(m, gi)| beta * m + (1.0 - beta) * gi)
            .collect()
    };
    let v_prev = |seed: &[f64]| -> Result<Vec<f64>> {
        Ok(match (first, init_sample) {
            (true, true) => partition.sq_norms(seed),
            (true, false) => vec![0.0; partition.num_blocks()],
            _ => state
                .v
                .clone()
                .ok_or_else(|| Error::Undefined("second-moment state is missing".into()))?,
        })
    };
    let ema = |prev: &[f64], fresh: &[f64], beta: f64| -> Vec<f64> {
        prev.iter()
            .zip(fresh)
            .map(|(p, f)| beta * p + (1.0 - beta) * f)
            .collect()
    };
    let scaled = |v: Vec<f64>, c: f64| -> Vec<f64> {
        if c == 1.0 {
            v
        } else {
            v.into_iter().map(|e| e / c).collect()
        }
    };

    let next_t = t + 1;
    let (direction, estimate, m_next, v_next) = match alg {
        Algorithm::Sgd => (g.to_vec(), None, None, None),
        Algorithm::SignSgd => (
            g.to_vec(),
            Some(g.iter().map(|e| e * e).collect()),
            None,
            None,
        ),
        Algorithm::SgdMomentum | Algorithm::SignMomentum => {
            let m = momentum(cfg.beta1);
            let d = scaled(m.clone(), rescale_factor(cfg, cfg.beta1, t));
            let est = (alg == Algorithm::SignMomentum).then(|| d.iter().map(|e| e * e).collect());
            (d, est, Some(m), None)
        }
        Algorithm::BcosG => {
            let beta = cfg.beta1;
            let v = ema(&v_prev(g)?, &partition.sq_norms(g), beta);
            let est = scaled(v.clone(), rescale_factor(cfg, beta, t));
            (g.to_vec(), Some(est), None, Some(v))
        }
        Algorithm::BcosM => {
            let m = momentum(cfg.beta1);
            let d = scaled(m.clone(), rescale_factor(cfg, cfg.beta1, t));
            let seed = m_prev.as_deref().unwrap_or(g);
            let v = ema(&v_prev(seed)?, &partition.sq_norms(&d), cfg.beta2);
            let est = scaled(v.clone(), rescale_factor(cfg, cfg.beta2, t));
            (d, Some(est), Some(m), Some(v))
        }
        Algorithm::Adam => {
            let m = momentum(cfg.beta1);
            let d = scaled(m.clone(), rescale_factor(cfg, cfg.beta1, t));
            let v = ema(&v_prev(g)?, &partition.sq_norms(g), cfg.beta2);
            let est = scaled(v.clone(), rescale_factor(cfg, cfg.beta2, t));
            (d, Some(est), Some(m), Some(v))
        }
        Algorithm::BcosC => {
            let beta = cfg.beta1;
            let mp = m_prev.as_deref().expect("bcos_c keeps momentum");
            let m = momentum(beta);
            let w = (1.0 - beta) * (1.0 - beta);
            let g_sq = partition.sq_norms(g);
            let v: Vec<f64> = if cfg.conditional_full {
                let mp_sq = partition.sq_norms(mp);
                let cross = partition.inner_products(mp, &m);
                mp_sq
                    .iter()
                    .zip(&cross)
                    .zip(&g_sq)
                    .map(|((a, c), b)| {
                        (beta * beta * a + 2.0 * beta * (1.0 - beta) * c + w * b).max(0.0)
                    })
                    .collect()
            } else {
                partition
                    .sq_norms(mp)
                    .iter()
                    .zip(&g_sq)
                    .map(|(a, b)| (1.0 - w) * a + w * b)
                    .collect()
            };
            let c = rescale_factor(cfg, beta, t);
            let d = scaled(m.clone(), c);
            let est = scaled(v, c * c);
            (d, Some(est), Some(m), None)
        }
        Algorithm::ConceptualBcos => {
            return Err(Error::param(
                "algorithm",
                "conceptual_bcos has no estimator state",
            ));
        }
    };

    Ok(Advance {
        direction,
        estimate,
        next: OptimizerState {
            m: m_next,
            v: v_next,
            t: next_t,
            initialized: true,
        },
    })
}

/// `d / denom` with the sign convention when the denominator vanishes.
#[inline]
pub(crate) fn normalized(d: f64, denom: f64) -> f64 {
    if denom == 0.0 {
        sign(d)
    } else {
        d / denom
    }
}

#[inline]
pub(crate) fn denominator(cfg: &OptimizerConfig, v: f64) -> f64 {
    if cfg.no_sqrt_diagnostic {
        return v + cfg.epsilon;
    }
    match cfg.epsilon_placement {
        EpsilonPlacement::OutsideSqrt => v.sqrt() + cfg.epsilon,
        EpsilonPlacement::InsideSqrt => (v + cfg.epsilon).sqrt(),
    }
}

fn apply_direction(
    cfg: &OptimizerConfig,
    partition: &BlockPartition,
    x: &mut [f64],
    adv: &Advance,
    alpha_t: f64,
) {
    let d = &adv.direction;
    match cfg.algorithm {
        Algorithm::SignSgd | Algorithm::SignMomentum => {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi -= alpha_t * sign(*di);
            }
        }
        Algorithm::Sgd | Algorithm::SgdMomentum => {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi -= alpha_t * di;
            }
        }
        _ => {
            let est = adv
                .estimate
                .as_ref()
                .expect("adaptive rules produce an estimate");
            for (k, range) in partition.blocks().enumerate() {
                let denom = denominator(cfg, est[k]);
                for i in range {
                    x[i] -= alpha_t * normalized(d[i], denom);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
