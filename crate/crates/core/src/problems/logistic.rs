use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GradientMoments, StochasticProblem};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamRng};
use crate::vector::{BlockPartition, ParamVector};

/// Binary logistic regression on a synthetic dataset with minibatch gradients.
///
/// Features are standard normal; labels are drawn from the logistic model of
/// a hidden standard-normal weight vector. No bias term.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    features: Vec<f64>,
    labels: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    batch_size: usize,
    lambda_reg: f64,
    partition: Arc<BlockPartition>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticProblem {
    pub fn synthetic(
        n_samples: usize,
        n_features: usize,
        batch_size: usize,
        data_seed: u64,
    ) -> Result<Self> {
        if n_samples == 0 || n_features == 0 {
            return Err(Error::param("n_samples", "dataset must be nonempty"));
        }
        if batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        let mut rng = stream(data_seed, 0, Purpose::Data);
        let w: Vec<f64> = (0..n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut features = Vec::with_capacity(n_samples * n_features);
        let mut labels = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let row: Vec<f64> = (0..n_features)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let z: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            let u: f64 = rng.random();
            labels.push(if u < sigmoid(z) { 1.0 } else { 0.0 });
            features.extend(row);
        }
        Ok(Self {
            features,
            labels,
            n_samples,
            n_features,
            batch_size,
            lambda_reg: 0.0,
            partition: Arc::new(BlockPartition::singletons(n_features)?),
        })
    }

    pub fn with_lambda_reg(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(
                "lambda_reg",
                format!("must be nonnegative, got {lambda}"),
            ));
        }
        self.lambda_reg = lambda;
        Ok(self)
    }

    pub fn with_partition(mut self, partition: Arc<BlockPartition>) -> Result<Self> {
        crate::error::ensure_len(self.n_features, partition.dim())?;
        self.partition = partition;
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    fn accumulate(&self, x: &[f64], i: usize, out: &mut [f64]) {
        let row = self.row(i);
        let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        let r = sigmoid(z) - self.labels[i];
        for (o, a) in out.iter_mut().zip(row) {
            *o += r * a;
        }
    }

    fn finish(&self, x: &[f64], count: usize, out: &mut [f64]) {
        let inv = 1.0 / count as f64;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = *o * inv + self.lambda_reg * xi;
        }
    }

    /// Gradient of the full-data objective.
    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for i in 0..self.n_samples {
            self.accumulate(x, i, &mut out);
        }
        self.finish(x, self.n_samples, &mut out);
        out
    }
}

impl StochasticProblem for LogisticProblem {
    fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    fn x_star(&self) -> Option<&ParamVector> {
        None
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let data: f64 = (0..self.n_samples)
            .map(|i| {
                let z: f64 = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
                softplus(z) - self.labels[i] * z
            })
            .sum();
        data / self.n_samples as f64 + 0.5 * self.lambda_reg * x.iter().map(|v| v * v).sum::<f64>()
    }

    /// Samples a minibatch without replacement; a batch at least as large as
    /// the dataset uses every point.
    fn sample_gradient_into(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.batch_size >= self.n_samples {
            for i in 0..self.n_samples {
                self.accumulate(x, i, out);
            }
            self.finish(x, self.n_samples, out);
            return;
        }
        for i in index::sample(rng, self.n_samples, self.batch_size) {
            self.accumulate(x, i, out);
        }
        self.finish(x, self.batch_size, out);
    }

    fn grad_moments(&self, _x: &[f64]) -> Option<GradientMoments> {
        None
    }

    fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }
}
