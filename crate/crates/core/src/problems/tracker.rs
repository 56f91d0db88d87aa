use std::sync::Arc;

use crate::error::{ensure_len, Error, Result};
use crate::optim::MomentOracle;
use crate::vector::BlockPartition;

use super::GradientMoments;

/// Exact conditional moments of the momentum `m_t = β m_{t−1} + (1−β) g_t`
/// given the realized `m_{t−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumMomentTracker {
    beta1: f64,
    m_mean: Vec<f64>,
    m_second: Vec<f64>,
}

impl MomentumMomentTracker {
    pub fn new(beta1: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) {
            return Err(Error::param(
                "beta1",
                format!("must lie in [0, 1), got {beta1}"),
            ));
        }
        Ok(Self {
            beta1,
            m_mean: Vec::new(),
            m_second: Vec::new(),
        })
    }

    /// Recomputes `E_t[m_t]` and `E_t[m_t²]` from `m_{t−1}` and the gradient moments.
    pub fn update(&mut self, m_prev: &[f64], g: &GradientMoments) -> Result<()> {
        ensure_len(g.mean.len(), m_prev.len())?;
        let b = self.beta1;
        let w = 1.0 - b;
        self.m_mean = m_prev
            .iter()
            .zip(&g.mean)
            .map(|(m, mu)| b * m + w * mu)
            .collect();
        self.m_second = (0..m_prev.len())
            .map(|i| {
                let m = m_prev[i];
                b * b * m * m + 2.0 * b * w * m * g.mean[i] + w * w * g.second[i]
            })
            .collect();
        Ok(())
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn m_mean(&self) -> &[f64] {
        &self.m_mean
    }

    pub fn m_second(&self) -> &[f64] {
        &self.m_second
    }

    pub fn oracle(&self, partition: Arc<BlockPartition>) -> Result<MomentOracle> {
        MomentOracle::from_coordinates(partition, self.m_mean.clone(), &self.m_second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{NoisyQuadratic, StochasticProblem};
    use crate::rng::{stream, Purpose};

    #[test]
    fn tracker_matches_replicated_momentum() {
        let beta = 0.8;
        let p = NoisyQuadratic::isotropic(3, 1.2, 0.9, vec![0.5, -0.5, 1.0]).unwrap();
        let x = [0.1, 0.2, -0.3];
        let m_prev = [0.4, -0.7, 0.05];
        let gm = p.grad_moments(&x).unwrap();
        let mut tr = MomentumMomentTracker::new(beta).unwrap();
        tr.update(&m_prev, &gm).unwrap();

        let n = 100_000;
        let mut rng = stream(21, 0, Purpose::MonteCarlo);
        let mut g = vec![0.0; 3];
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for _ in 0..n {
            p.sample_gradient_into(&x, &mut rng, &mut g);
            for i in 0..3 {
                let m = beta * m_prev[i] + (1.0 - beta) * g[i];
                sum[i] += m * m;
                sum_sq[i] += m.powi(4);
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sum_sq[i] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - tr.m_second()[i]).abs() < 3.0 * se);
        }
    }
}
