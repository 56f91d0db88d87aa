use std::sync::Arc;

use crate::error::{ensure_len, Error, Result};
use crate::vector::{BlockPartition, ParamVector};

/// Exact conditional moments of a search direction `d_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentOracle {
    mean_d: ParamVector,
    second_moment_d: Vec<f64>,
}

impl MomentOracle {
    /// `second_moment_d[k]` is `E‖d_k‖²` for block `k` of `mean_d`'s partition.
    pub fn new(mean_d: ParamVector, second_moment_d: Vec<f64>) -> Result<Self> {
        ensure_len(mean_d.partition().num_blocks(), second_moment_d.len())?;
        let mean_sq = mean_d.block_sq_norms();
        for (k, (&s, &ms)) in second_moment_d.iter().zip(&mean_sq).enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::param(
                    "second_moment_d",
                    format!("block {k} has invalid second moment {s}"),
                ));
            }
            // mean-variance decomposition, up to rounding
            if s < ms * (1.0 - 1e-12) {
                return Err(Error::param(
                    "second_moment_d",
                    format!("block {k}: second moment {s} is below squared mean norm {ms}"),
                ));
            }
        }
        Ok(Self {
            mean_d,
            second_moment_d,
        })
    }

    /// Builds block moments from per-coordinate `E[d_i]` and `E[d_i²]`.
    pub fn from_coordinates(
        partition: Arc<BlockPartition>,
        mean: Vec<f64>,
        second_per_coord: &[f64],
    ) -> Result<Self> {
        ensure_len(partition.dim(), second_per_coord.len())?;
        let second = partition.sums(second_per_coord);
        let mean_d = ParamVector::new(mean, partition)?;
        Self::new(mean_d, second)
    }

    pub fn mean_d(&self) -> &ParamVector {
        &self.mean_d
    }

    pub fn second_moment_d(&self) -> &[f64] {
        &self.second_moment_d
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        self.mean_d.partition()
    }

    pub(crate) fn check_positive(&self) -> Result<()> {
        match self.second_moment_d.iter().position(|&s| s <= 0.0) {
            Some(block) => Err(Error::ZeroSecondMoment { block }),
            None => Ok(()),
        }
    }

    /// `E[d] / sqrt(E‖d_k‖²)` with the block denominator broadcast.
    pub fn normalized_mean(&self) -> Result<Vec<f64>> {
        self.check_positive()?;
        let p = self.partition();
        let mut out = self.mean_d.values().to_vec();
        for (k, range) in p.blocks().enumerate() {
            let root = self.second_moment_d[k].sqrt();
            out[range].iter_mut().for_each(|e| *e /= root);
        }
        Ok(out)
    }
}

/// One conceptual step: `x <- (1 - alpha*lambda) x - alpha d / sqrt(E‖d_k‖²)`.
pub fn conceptual_step(
    oracle: &MomentOracle,
    x: &ParamVector,
    d_sample: &ParamVector,
    alpha_t: f64,
    lambda: f64,
) -> Result<ParamVector> {
    let p = oracle.partition();
    ensure_len(p.dim(), x.len())?;
    ensure_len(p.dim(), d_sample.len())?;
    oracle.check_positive()?;
    let mut out = x.clone();
    let shrink = 1.0 - alpha_t * lambda;
    out.update(|values| {
        for (k, range) in p.blocks().enumerate() {
            let root = oracle.second_moment_d[k].sqrt();
            for i in range {
                values[i] = shrink * values[i] - alpha_t * d_sample[i] / root;
            }
        }
    })?;
    Ok(out)
}

/// Per-block stepsizes minimizing the expected one-step distance to `x_star`.
/// Negative values are legitimate.
pub fn optimal_stepsizes(
    oracle: &MomentOracle,
    x: &ParamVector,
    x_star: &ParamVector,
) -> Result<Vec<f64>> {
    let p = oracle.partition();
    ensure_len(p.dim(), x.len())?;
    ensure_len(p.dim(), x_star.len())?;
    oracle.check_positive()?;
    let e: Vec<f64> = x.iter().zip(x_star.iter()).map(|(a, b)| a - b).collect();
    let num = p.inner_products(&e, oracle.mean_d.values());
    Ok(num
        .iter()
        .zip(&oracle.second_moment_d)
        .map(|(n, s)| n / s)
        .collect())
}

/// Signal fraction per block: `‖E d_k‖² / E‖d_k‖²`.
pub fn sif(oracle: &MomentOracle) -> Result<Vec<f64>> {
    oracle.check_positive()?;
    Ok(oracle
        .mean_d
        .block_sq_norms()
        .iter()
        .zip(&oracle.second_moment_d)
        .map(|(m, s)| (m / s).min(1.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn scalar(mean: f64, second: f64) -> MomentOracle {
        MomentOracle::new(ParamVector::from_values(vec![mean]).unwrap(), vec![second]).unwrap()
    }

    #[test]
    fn sif_examples() {
        assert_eq!(sif(&scalar(2.0, 4.0)).unwrap(), vec![1.0]);
        assert_eq!(sif(&scalar(0.0, 3.0)).unwrap(), vec![0.0]);
        // E[d]=1, Var=3 -> E[d^2] = 4
        assert_eq!(sif(&scalar(1.0, 4.0)).unwrap(), vec![0.25]);
    }

    #[test]
    fn zero_second_moment_is_an_error() {
        let o = scalar(0.0, 0.0);
        assert!(matches!(sif(&o), Err(Error::ZeroSecondMoment { block: 0 })));
        let x = ParamVector::from_values(vec![1.0]).unwrap();
        assert!(conceptual_step(&o, &x, &x, 0.1, 0.0).is_err());
        assert!(optimal_stepsizes(&o, &x, &x).is_err());
    }

    #[test]
    fn oracle_rejects_second_moment_below_mean_square() {
        let m = ParamVector::from_values(vec![2.0]).unwrap();
        assert!(MomentOracle::new(m, vec![3.0]).is_err());
    }

    #[test]
    fn aligned_direction_gives_unit_stepsize() {
        let p = Arc::new(BlockPartition::full(3).unwrap());
        let x = ParamVector::new(vec![1.0, -2.0, 0.5], p.clone()).unwrap();
        let xs = ParamVector::zeros(p.clone());
        let e2 = x.sq_norm();
        let o = MomentOracle::new(x.clone(), vec![e2]).unwrap();
        let g = optimal_stepsizes(&o, &x, &xs).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_direction_gives_zero_stepsize() {
        let p = Arc::new(BlockPartition::full(2).unwrap());
        let x = ParamVector::new(vec![1.0, 0.0], p.clone()).unwrap();
        let mean = ParamVector::new(vec![0.0, 3.0], p.clone()).unwrap();
        let o = MomentOracle::new(mean, vec![10.0]).unwrap();
        let g = optimal_stepsizes(&o, &x, &ParamVector::zeros(p)).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn deterministic_direction_gives_sign_step() {
        let d = ParamVector::from_values(vec![3.0, -0.2, 7.0]).unwrap();
        let o = MomentOracle::from_coordinates(
            d.partition().clone(),
            d.values().to_vec(),
            &d.iter().map(|v| v * v).collect::<Vec<_>>(),
        )
        .unwrap();
        let x = ParamVector::from_values(vec![1.0, 1.0, 1.0]).unwrap();
        let out = conceptual_step(&o, &x, &d, 0.5, 0.0).unwrap();
        assert_eq!(out.values(), &[0.5, 1.5, 0.5]);
    }

    #[test]
    fn gaussian_direction_mean_step_matches_oracle() {
        let (mu, s, alpha) = (0.7, 1.3, 0.2);
        let o = scalar(mu, mu * mu + s * s);
        let x = ParamVector::from_values(vec![0.0]).unwrap();
        let mut rng = stream(11, 0, Purpose::MonteCarlo);
        let n = 100_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let d = ParamVector::from_values(vec![mu + s * z]).unwrap();
            let step = conceptual_step(&o, &x, &d, alpha, 0.0).unwrap()[0];
            sum += step;
            sum_sq += step * step;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let expected = -alpha * mu / (mu * mu + s * s).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
    }

    #[test]
    fn zero_mean_direction_has_no_drift() {
        let o = scalar(0.0, 1.0);
        let x = ParamVector::from_values(vec![0.0]).unwrap();
        let mut rng = stream(12, 0, Purpose::MonteCarlo);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            sum += conceptual_step(
                &o,
                &x,
                &ParamVector::from_values(vec![z]).unwrap(),
                1.0,
                0.0,
            )
            .unwrap()[0];
        }
        let se = 1.0 / (n as f64).sqrt();
        assert!((sum / n as f64).abs() < 3.0 * se);
    }
}
