use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{CatalogFixture, DiagnosticsSpec, TrajectorySpec};
use crate::error::{Error, Result};
use crate::optim::{Algorithm, BiasCorrection, EpsilonPlacement, OptimizerConfig};
use crate::problems::{LogisticProblem, NoiseKind, NoisyQuadratic, StochasticProblem};
use crate::schedules::{ScheduleKind, StepSchedule};
use crate::vector::BlockPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
}

/// A scalar broadcast to every coordinate, or one value per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCoord {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerCoord {
    fn expand(&self, n: usize, field: &'static str) -> Result<Vec<f64>> {
        match self {
            PerCoord::Scalar(v) => Ok(vec![*v; n]),
            PerCoord::List(v) if v.len() == n => Ok(v.clone()),
            PerCoord::List(v) => Err(Error::param(
                field,
                format!("expected {n} values, got {}", v.len()),
            )),
        }
    }
}

/// TOML integers are signed, so seeds above `i64::MAX` are written as strings.
mod seed {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t
                .parse()
                .map_err(|_| de::Error::custom(format!("invalid seed `{t}`"))),
        }
    }
}

/// Flat experiment configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // problem
    pub problem: ProblemKind,
    pub dim: usize,
    /// Coordinates per block; 1 gives singleton blocks.
    pub block_size: usize,
    pub curvature: PerCoord,
    pub noise_std: PerCoord,
    pub noise: NoiseKind,
    pub center: PerCoord,
    pub x0: PerCoord,
    pub lambda_reg: f64,
    pub n_samples: usize,
    pub n_features: usize,
    pub batch_size: usize,
    #[serde(with = "seed")]
    pub data_seed: u64,

    // optimizer
    pub algorithm: Algorithm,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epsilon_placement: EpsilonPlacement,
    pub weight_decay: f64,
    pub decoupled: bool,
    pub bias_correction: BiasCorrection,
    pub conditional_full: bool,

    // schedule
    pub schedule: ScheduleKind,
    pub alpha: f64,
    pub power: f64,
    pub warmup_steps: usize,
    /// Decay horizon of warmup schedules; 0 means `steps`.
    pub total_steps: usize,
    pub alpha_min_ratio: f64,

    // run
    pub steps: usize,
    pub n_seeds: usize,
    #[serde(with = "seed")]
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub parallel: usize,
    pub record_aiming: bool,
    /// Estimator diagnostics every this many steps; 0 disables them.
    pub diagnostics_every: usize,
    pub diagnostics_n_mc: usize,

    // verify
    pub verify_counterexamples: bool,
    pub verify_chung: bool,
    pub verify_ratio_expansion: bool,
    pub verify_estimator_stats: bool,
    pub chung_horizon: u64,
    pub ratio_n_mc: usize,
    pub estimator_n_mc: usize,
    /// Smoothing factor used inside the expected-variance formulas; set it
    /// away from `beta1`/`beta2` to make the estimator check fail on purpose.
    pub fixture_beta: Option<f64>,

    // sweep
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    pub sweep_param2: Option<String>,
    pub sweep_values2: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Quadratic,
            dim: 10,
            block_size: 1,
            curvature: PerCoord::Scalar(1.0),
            noise_std: PerCoord::Scalar(1.0),
            noise: NoiseKind::Gaussian,
            center: PerCoord::Scalar(0.0),
            x0: PerCoord::Scalar(1.0),
            lambda_reg: 0.0,
            n_samples: 1000,
            n_features: 20,
            batch_size: 32,
            data_seed: 0,
            algorithm: Algorithm::BcosC,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-6,
            epsilon_placement: EpsilonPlacement::OutsideSqrt,
            weight_decay: 0.0,
            decoupled: true,
            bias_correction: BiasCorrection::InitFirstSample,
            conditional_full: false,
            schedule: ScheduleKind::Constant,
            alpha: 0.1,
            power: 0.75,
            warmup_steps: 0,
            total_steps: 0,
            alpha_min_ratio: 0.0,
            steps: 1000,
            n_seeds: 8,
            base_seed: 0,
            output_dir: PathBuf::from("out"),
            parallel: 0,
            record_aiming: false,
            diagnostics_every: 0,
            diagnostics_n_mc: 10_000,
            verify_counterexamples: true,
            verify_chung: true,
            verify_ratio_expansion: true,
            verify_estimator_stats: true,
            chung_horizon: 10_000_000,
            ratio_n_mc: 1_000_000,
            estimator_n_mc: 100_000,
            fixture_beta: None,
            sweep_param: None,
            sweep_values: Vec::new(),
            sweep_param2: None,
            sweep_values2: Vec::new(),
        }
    }
}

/// Parameters a sweep may vary.
pub const SWEEPABLE: [&str; 11] = [
    "alpha",
    "beta1",
    "beta2",
    "epsilon",
    "weight_decay",
    "lambda_reg",
    "curvature",
    "noise_std",
    "power",
    "warmup_steps",
    "batch_size",
];

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::param("config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::param("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config fields are all TOML-representable")
    }

    fn problem_dim(&self) -> usize {
        match self.problem {
            ProblemKind::Quadratic => self.dim,
            ProblemKind::Logistic => self.n_features,
        }
    }

    pub fn partition(&self) -> Result<Arc<BlockPartition>> {
        let n = self.problem_dim();
        if n == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if self.block_size == 0 {
            return Err(Error::param("block_size", "must be positive"));
        }
        Ok(Arc::new(BlockPartition::uniform(n, self.block_size)?))
    }

    pub fn build_problem(&self) -> Result<Box<dyn StochasticProblem>> {
        let partition = self.partition()?;
        let n = partition.dim();
        Ok(match self.problem {
            ProblemKind::Quadratic => Box::new(
                NoisyQuadratic::new(
                    self.curvature.expand(n, "curvature")?,
                    self.noise_std.expand(n, "noise_std")?,
                    self.center.expand(n, "center")?,
                    partition,
                )?
                .with_noise(self.noise)
                .with_lambda_reg(self.lambda_reg)?,
            ),
            ProblemKind::Logistic => Box::new(
                LogisticProblem::synthetic(
                    self.n_samples,
                    self.n_features,
                    self.batch_size,
                    self.data_seed,
                )?
                .with_lambda_reg(self.lambda_reg)?
                .with_partition(partition)?,
            ),
        })
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig> {
        let cfg = OptimizerConfig {
            algorithm: self.algorithm,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            epsilon_placement: self.epsilon_placement,
            weight_decay_lambda: self.weight_decay,
            decoupled: self.decoupled,
            bias_correction: self.bias_correction,
            conditional_full: self.conditional_full,
            no_sqrt_diagnostic: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        let total = if self.total_steps == 0 {
            self.steps.max(1)
        } else {
            self.total_steps
        };
        let s = StepSchedule::build(
            self.schedule,
            self.alpha,
            self.power,
            self.warmup_steps,
            total,
            self.alpha_min_ratio,
        )?;
        if self.decoupled
            && s.validate_against_lambda(self.weight_decay)
                .has_peak_violation()
        {
            return Err(Error::param(
                "schedule",
                format!(
                    "alpha = {} times weight_decay = {} exceeds 1 under decoupled decay",
                    self.alpha, self.weight_decay
                ),
            ));
        }
        Ok(s)
    }

    pub fn trajectory_spec(&self) -> Result<TrajectorySpec> {
        let n = self.problem_dim();
        let mut spec = TrajectorySpec::new(
            self.optimizer()?,
            self.schedule()?,
            self.x0.expand(n, "x0")?,
            self.steps,
        )
        .with_aiming(self.record_aiming);
        if self.diagnostics_every > 0 {
            spec.diagnostics = Some(DiagnosticsSpec {
                every: self.diagnostics_every,
                n_mc: self.diagnostics_n_mc,
            });
        }
        Ok(spec)
    }

    pub fn catalog_fixture(&self) -> CatalogFixture {
        CatalogFixture {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon.max(1e-12),
            n_mc: self.estimator_n_mc,
            seed: self.base_seed,
            expected_beta: self.fixture_beta,
        }
    }

    /// Checks every field that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds < 2 {
            return Err(Error::param(
                "n_seeds",
                format!("need at least 2, got {}", self.n_seeds),
            ));
        }
        let problem = self.build_problem()?;
        let spec = self.trajectory_spec()?;
        spec.validate(problem.as_ref())?;
        if let Some(name) = &self.sweep_param {
            self.check_sweep_name(name)?;
        }
        if let Some(name) = &self.sweep_param2 {
            self.check_sweep_name(name)?;
        }
        if self.fixture_beta.is_some_and(|b| !(0.0..1.0).contains(&b)) {
            return Err(Error::param("fixture_beta", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn check_sweep_name(&self, name: &str) -> Result<()> {
        if SWEEPABLE.contains(&name) {
            Ok(())
        } else {
            Err(Error::param(
                "sweep_param",
                format!(
                    "`{name}` cannot be swept; choose one of {}",
                    SWEEPABLE.join(", ")
                ),
            ))
        }
    }

    /// Sets a sweepable parameter by name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        self.check_sweep_name(name)?;
        let as_count = |v: f64, field: &'static str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::param(
                    field,
                    format!("needs a nonnegative integer, got {v}"),
                ))
            }
        };
        match name {
            "alpha" => self.alpha = value,
            "beta1" => self.beta1 = value,
            "beta2" => self.beta2 = value,
            "epsilon" => self.epsilon = value,
            "weight_decay" => self.weight_decay = value,
            "lambda_reg" => self.lambda_reg = value,
            "curvature" => self.curvature = PerCoord::Scalar(value),
            "noise_std" => self.noise_std = PerCoord::Scalar(value),
            "power" => self.power = value,
            "warmup_steps" => self.warmup_steps = as_count(value, "warmup_steps")?,
            "batch_size" => self.batch_size = as_count(value, "batch_size")?,
            _ => unreachable!("checked above"),
        }
        Ok(())
    }
}
