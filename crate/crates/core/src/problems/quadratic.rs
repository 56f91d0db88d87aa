use std::sync::Arc;

use rand::Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::{GradientMoments, StochasticProblem};
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::rng::StreamRng;
use crate::vector::{BlockPartition, ParamVector};

const STUDENT_DF: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Student-t with 5 degrees of freedom, rescaled to unit variance.
    StudentT,
}

impl NoiseKind {
    /// `E z⁴` for the unit-variance noise.
    fn fourth_moment(self) -> f64 {
        match self {
            NoiseKind::Gaussian => 3.0,
            // 3 df² / ((df-2)(df-4)) scaled by ((df-2)/df)²
            NoiseKind::StudentT => 3.0 * (STUDENT_DF - 2.0) / (STUDENT_DF - 4.0),
        }
    }
}

/// Separable quadratic `f(x, ξ) = ½ Σ h_i (x_i − c_i − ξ_i)² + λ/2 ‖x‖²` with
/// `ξ_i = σ_i z_i` and unit-variance symmetric `z`.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    h: Vec<f64>,
    sigma: Vec<f64>,
    center: Vec<f64>,
    lambda_reg: f64,
    noise: NoiseKind,
    partition: Arc<BlockPartition>,
    x_star: ParamVector,
    student: Option<StudentT<f64>>,
}

impl NoisyQuadratic {
    pub fn new(
        h: Vec<f64>,
        sigma: Vec<f64>,
        center: Vec<f64>,
        partition: Arc<BlockPartition>,
    ) -> Result<Self> {
        let n = partition.dim();
        ensure_len(n, h.len())?;
        ensure_len(n, sigma.len())?;
        ensure_len(n, center.len())?;
        ensure_finite(&h)?;
        ensure_finite(&sigma)?;
        ensure_finite(&center)?;
        if h.iter().any(|&v| v <= 0.0) {
            return Err(Error::param("curvature", "entries must be positive"));
        }
        if sigma.iter().any(|&v| v < 0.0) {
            return Err(Error::param("noise_std", "entries must be nonnegative"));
        }
        let x_star = ParamVector::new(center.clone(), partition.clone())?;
        Ok(Self {
            h,
            sigma,
            center,
            lambda_reg: 0.0,
            noise: NoiseKind::Gaussian,
            partition,
            x_star,
            student: None,
        })
    }

    /// Identical curvature and noise on every coordinate, singleton blocks.
    pub fn isotropic(n: usize, h: f64, sigma: f64, center: Vec<f64>) -> Result<Self> {
        let p = Arc::new(BlockPartition::singletons(n)?);
        Self::new(vec![h; n], vec![sigma; n], center, p)
    }

    /// Folds `λ/2 ‖x‖²` into the objective; the target moves to `h c / (h + λ)`.
    pub fn with_lambda_reg(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(
                "lambda_reg",
                format!("must be nonnegative, got {lambda}"),
            ));
        }
        self.lambda_reg = lambda;
        let target = self
            .h
            .iter()
            .zip(&self.center)
            .map(|(h, c)| h * c / (h + lambda))
            .collect();
        self.x_star = ParamVector::new(target, self.partition.clone())?;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self.student = match noise {
            NoiseKind::StudentT => Some(StudentT::new(STUDENT_DF).expect("df is positive")),
            NoiseKind::Gaussian => None,
        };
        self
    }

    pub fn curvature(&self) -> &[f64] {
        &self.h
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.sigma
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match &self.student {
            None => rng.sample(StandardNormal),
            Some(t) => rng.sample(t) * ((STUDENT_DF - 2.0) / STUDENT_DF).sqrt(),
        }
    }
}

impl StochasticProblem for NoisyQuadratic {
    fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    fn x_star(&self) -> Option<&ParamVector> {
        Some(&self.x_star)
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let quad: f64 = (0..x.len())
            .map(|i| {
                let e = x[i] - self.center[i];
                self.h[i] * (e * e + self.sigma[i] * self.sigma[i])
            })
            .sum();
        0.5 * quad + 0.5 * self.lambda_reg * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn sample_gradient_into(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        for i in 0..x.len() {
            let noise = if self.sigma[i] == 0.0 {
                0.0
            } else {
                self.sigma[i] * self.draw(rng)
            };
            out[i] =
                self.h[i] * (x[i] - self.center[i]) - self.h[i] * noise + self.lambda_reg * x[i];
        }
    }

    fn grad_moments(&self, x: &[f64]) -> Option<GradientMoments> {
        let n = x.len();
        let k4 = self.noise.fourth_moment();
        let mut gm = GradientMoments {
            mean: vec![0.0; n],
            second: vec![0.0; n],
            third: vec![0.0; n],
            fourth: vec![0.0; n],
        };
        for i in 0..n {
            let mu = self.h[i] * (x[i] - self.center[i]) + self.lambda_reg * x[i];
            let s2 = (self.h[i] * self.sigma[i]).powi(2);
            gm.mean[i] = mu;
            gm.second[i] = mu * mu + s2;
            gm.third[i] = mu.powi(3) + 3.0 * mu * s2;
            gm.fourth[i] = mu.powi(4) + 6.0 * mu * mu * s2 + k4 * s2 * s2;
        }
        Some(gm)
    }

    fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn mc_moments(p: &NoisyQuadratic, x: &[f64], n: usize, seed: u64) -> Vec<[f64; 4]> {
        let mut rng = stream(seed, 0, Purpose::MonteCarlo);
        let mut acc = vec![[0.0; 4]; x.len()];
        let mut g = vec![0.0; x.len()];
        for _ in 0..n {
            p.sample_gradient_into(x, &mut rng, &mut g);
            for (a, gi) in acc.iter_mut().zip(&g) {
                for (k, slot) in a.iter_mut().enumerate() {
                    *slot += gi.powi(k as i32 + 1);
                }
            }
        }
        acc.iter().map(|a| a.map(|s| s / n as f64)).collect()
    }

    #[test]
    fn zero_noise_gradient_is_exact() {
        let p = NoisyQuadratic::isotropic(3, 2.0, 0.0, vec![1.0, -1.0, 0.5]).unwrap();
        let x = ParamVector::from_values(vec![0.0, 0.0, 0.0]).unwrap();
        let mut rng = stream(1, 0, Purpose::Gradient);
        let g = p.sample_gradient(&x, &mut rng).unwrap();
        assert_eq!(g.values(), &[-2.0, 2.0, -1.0]);
    }

    #[test]
    fn gradient_mean_at_target_is_zero() {
        let p = NoisyQuadratic::isotropic(4, 1.5, 0.7, vec![0.3, -0.2, 1.0, 2.0]).unwrap();
        let x = p.x_star().unwrap().values().to_vec();
        let n = 100_000;
        let m = mc_moments(&p, &x, n, 5);
        let sd = 1.5 * 0.7;
        for row in m {
            assert!(row[0].abs() < 4.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn closed_form_moments_match_monte_carlo() {
        for noise in [NoiseKind::Gaussian, NoiseKind::StudentT] {
            let p = NoisyQuadratic::isotropic(2, 1.3, 0.8, vec![1.0, -1.0])
                .unwrap()
                .with_noise(noise);
            let x = [0.4, 0.1];
            let n = 200_000;
            let mc = mc_moments(&p, &x, n, 9);
            let gm = p.grad_moments(&x).unwrap();
            for i in 0..2 {
                let sd1 = gm.variance()[i].sqrt();
                assert!((mc[i][0] - gm.mean[i]).abs() < 4.0 * sd1 / (n as f64).sqrt());
                let sd2 = gm.variance_of_square()[i].sqrt();
                assert!((mc[i][1] - gm.second[i]).abs() < 4.0 * sd2 / (n as f64).sqrt());
                assert!(gm.second[i] >= gm.mean[i].powi(2));
            }
        }
    }

    #[test]
    fn lambda_reg_shifts_mean_by_lambda_x() {
        let base = NoisyQuadratic::isotropic(2, 2.0, 1.0, vec![1.0, 3.0]).unwrap();
        let reg = base.clone().with_lambda_reg(0.5).unwrap();
        let x = [0.7, -1.2];
        let a = base.grad_moments(&x).unwrap();
        let b = reg.grad_moments(&x).unwrap();
        for i in 0..2 {
            assert_eq!(b.mean[i], a.mean[i] + 0.5 * x[i]);
        }
        let xs = reg.x_star().unwrap();
        assert!((xs[0] - 0.8).abs() < 1e-15);
        let gm = reg.grad_moments(xs.values()).unwrap();
        assert!(gm.mean.iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn target_minimizes_expected_loss() {
        let p = NoisyQuadratic::isotropic(3, 0.9, 0.4, vec![0.5, -2.0, 1.0])
            .unwrap()
            .with_lambda_reg(0.3)
            .unwrap();
        let xs = p.x_star().unwrap().values().to_vec();
        let f0 = p.loss(&xs);
        let mut rng = stream(2, 0, Purpose::Instance);
        for _ in 0..1000 {
            let x: Vec<f64> = xs
                .iter()
                .map(|v| v + rng.sample::<f64, _>(StandardNormal))
                .collect();
            assert!(f0 <= p.loss(&x));
        }
    }

    #[test]
    fn shifted_moments_match_direct_expansion() {
        let p = NoisyQuadratic::isotropic(1, 1.0, 0.5, vec![0.0]).unwrap();
        let a = p.grad_moments(&[0.3]).unwrap().shifted(&[0.2]).unwrap();
        let b = p.grad_moments(&[0.5]).unwrap();
        for (u, v) in [
            (a.mean[0], b.mean[0]),
            (a.second[0], b.second[0]),
            (a.third[0], b.third[0]),
            (a.fourth[0], b.fourth[0]),
        ] {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
