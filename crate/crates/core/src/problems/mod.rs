//! Stochastic test problems and the aiming counterexamples.

mod aiming;
mod logistic;
mod quadratic;
mod tracker;

pub use aiming::{
    aiming_inner_product, aiming_value, aiming_value_rearranged, counterexample_log_aiming,
    counterexample_quadratic_not_aiming,
};
pub use logistic::LogisticProblem;
pub use quadratic::{NoiseKind, NoisyQuadratic};
pub use tracker::MomentumMomentTracker;

use std::sync::Arc;

use crate::error::{ensure_len, Result};
use crate::optim::MomentOracle;
use crate::rng::StreamRng;
use crate::vector::{BlockPartition, ParamVector};

/// Per-coordinate raw moments of the stochastic gradient at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMoments {
    pub mean: Vec<f64>,
    pub second: Vec<f64>,
    pub third: Vec<f64>,
    pub fourth: Vec<f64>,
}

impl GradientMoments {
    pub fn variance(&self) -> Vec<f64> {
        self.second
            .iter()
            .zip(&self.mean)
            .map(|(s, m)| (s - m * m).max(0.0))
            .collect()
    }

    /// `Var(g²) = E g⁴ − (E g²)²`.
    pub fn variance_of_square(&self) -> Vec<f64> {
        self.fourth
            .iter()
            .zip(&self.second)
            .map(|(f, s)| (f - s * s).max(0.0))
            .collect()
    }

    /// Moments of `g + delta` for a deterministic shift `delta`.
    pub fn shifted(&self, delta: &[f64]) -> Result<Self> {
        ensure_len(self.mean.len(), delta.len())?;
        let mut out = self.clone();
        for i in 0..delta.len() {
            let (m1, m2, m3, m4) = (self.mean[i], self.second[i], self.third[i], self.fourth[i]);
            let c = delta[i];
            out.mean[i] = m1 + c;
            out.second[i] = m2 + 2.0 * c * m1 + c * c;
            out.third[i] = m3 + 3.0 * c * m2 + 3.0 * c * c * m1 + c.powi(3);
            out.fourth[i] = m4 + 4.0 * c * m3 + 6.0 * c * c * m2 + 4.0 * c.powi(3) * m1 + c.powi(4);
        }
        Ok(out)
    }

    /// Block moment oracle for the raw gradient.
    pub fn oracle(&self, partition: Arc<BlockPartition>) -> Result<MomentOracle> {
        MomentOracle::from_coordinates(partition, self.mean.clone(), &self.second)
    }
}

/// A stochastic objective `F(x) = E f(x, ξ)`.
pub trait StochasticProblem: Send + Sync {
    fn dim(&self) -> usize {
        self.partition().dim()
    }

    fn partition(&self) -> &Arc<BlockPartition>;

    /// Target point, when known.
    fn x_star(&self) -> Option<&ParamVector>;

    /// Expected loss, including the regularizer.
    fn loss(&self, x: &[f64]) -> f64;

    /// Writes one stochastic gradient draw at `x` into `out`.
    fn sample_gradient_into(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]);

    /// Exact gradient moments at `x`, when available.
    fn grad_moments(&self, x: &[f64]) -> Option<GradientMoments>;

    /// Coefficient of the `λ/2 ‖x‖²` term already inside the gradient.
    fn lambda_reg(&self) -> f64;

    fn sample_gradient(&self, x: &ParamVector, rng: &mut StreamRng) -> Result<ParamVector> {
        ensure_len(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.sample_gradient_into(x, rng, &mut out);
        ParamVector::new(out, self.partition().clone())
    }
}
