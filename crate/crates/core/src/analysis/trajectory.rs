use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Divergence, Error, Result};
use crate::optim::{conceptual_step, Algorithm, Optimizer, OptimizerConfig, OptimizerState};
use crate::problems::{aiming_value, MomentumMomentTracker, StochasticProblem};
use crate::rng::{stream, Purpose};
use crate::schedules::StepSchedule;
use crate::vector::{dist_sq, ParamVector};

use super::estimator::{effective_gradient_moments, estimator_stats, EstimatorSummary};

/// Trajectories whose squared distance exceeds this are aborted.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Seeds per parallel work unit. Fixed so the reduction order never depends
/// on the thread count.
const SEED_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    /// `‖x_t − x*‖²`, when the target is known.
    pub dist_sq: Option<f64>,
    pub loss: f64,
    /// Stepsize used for the step from `x_t` to `x_{t+1}`.
    pub alpha_t: f64,
    pub aiming_value: Option<f64>,
    pub estimator_diag: Option<EstimatorSummary>,
}

/// Periodic estimator diagnostics along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsSpec {
    pub every: usize,
    pub n_mc: usize,
}

#[derive(Debug, Clone)]
pub struct TrajectorySpec {
    pub optimizer: OptimizerConfig,
    pub schedule: StepSchedule,
    pub x0: Vec<f64>,
    pub steps: usize,
    pub record_aiming: bool,
    pub diagnostics: Option<DiagnosticsSpec>,
}

impl TrajectorySpec {
    pub fn new(
        optimizer: OptimizerConfig,
        schedule: StepSchedule,
        x0: Vec<f64>,
        steps: usize,
    ) -> Self {
        Self {
            optimizer,
            schedule,
            x0,
            steps,
            record_aiming: false,
            diagnostics: None,
        }
    }

    pub fn with_aiming(mut self, record: bool) -> Self {
        self.record_aiming = record;
        self
    }

    pub fn validate(&self, problem: &dyn StochasticProblem) -> Result<()> {
        self.optimizer.validate()?;
        crate::error::ensure_len(problem.dim(), self.x0.len())?;
        crate::error::ensure_finite(&self.x0)?;
        let lambda = self.optimizer.weight_decay_lambda;
        if self.optimizer.decoupled
            && self
                .schedule
                .validate_against_lambda(lambda)
                .has_peak_violation()
        {
            return Err(Error::param(
                "schedule",
                format!(
                    "peak stepsize {} times weight decay {lambda} exceeds 1",
                    self.schedule.peak()
                ),
            ));
        }
        if self.optimizer.algorithm == Algorithm::ConceptualBcos
            && problem.grad_moments(&self.x0).is_none()
        {
            return Err(Error::MissingOracle);
        }
        if let Some(d) = self.diagnostics {
            if d.every == 0 {
                return Err(Error::param("diagnostics", "interval must be positive"));
            }
        }
        Ok(())
    }
}

/// Aiming value at `x` for the direction the configured rule will use next.
fn aiming_at(
    problem: &dyn StochasticProblem,
    cfg: &OptimizerConfig,
    state: Option<&OptimizerState>,
    x: &[f64],
) -> Result<Option<f64>> {
    let Some(x_star) = problem.x_star() else {
        return Ok(None);
    };
    if problem.grad_moments(x).is_none() {
        return Ok(None);
    }
    let gm = effective_gradient_moments(problem, x, cfg)?;
    let partition = problem.partition().clone();
    let oracle = match state {
        Some(s) if cfg.algorithm.uses_momentum() && s.initialized => {
            let mut tr = MomentumMomentTracker::new(cfg.beta1)?;
            tr.update(s.m.as_deref().unwrap_or_default(), &gm)?;
            tr.oracle(partition)?
        }
        _ => gm.oracle(partition)?,
    };
    if oracle.second_moment_d().iter().any(|&s| s <= 0.0) {
        return Ok(None);
    }
    let lambda = if cfg.decoupled {
        cfg.weight_decay_lambda
    } else {
        0.0
    };
    aiming_value(x, x_star.values(), lambda, &oracle).map(Some)
}

/// Runs one trajectory and hands each record to `sink`. On divergence the
/// error carries only the offending record.
fn simulate(
    problem: &dyn StochasticProblem,
    spec: &TrajectorySpec,
    base_seed: u64,
    index: u64,
    mut sink: impl FnMut(TrajectoryRecord),
) -> Result<()> {
    spec.validate(problem)?;
    let cfg = spec.optimizer;
    let partition = problem.partition().clone();
    let n = partition.dim();
    let mut rng = stream(base_seed, index, Purpose::Gradient);
    let mut mc_rng = stream(base_seed, index, Purpose::MonteCarlo);
    let conceptual = cfg.algorithm == Algorithm::ConceptualBcos;
    let mut opt = if conceptual {
        None
    } else {
        Some(Optimizer::new(cfg, partition.clone())?)
    };
    let lambda = cfg.weight_decay_lambda;
    let x_star = problem.x_star().map(|p| p.values().to_vec());
    let mut x = spec.x0.clone();
    let mut g = vec![0.0; n];

    for t in 0..=spec.steps {
        let alpha_t = spec.schedule.value_at(t);
        let dist = x_star.as_ref().map(|xs| dist_sq(&x, xs));
        let aiming = if spec.record_aiming {
            aiming_at(problem, &cfg, opt.as_ref().map(|o| o.state()), &x)?
        } else {
            None
        };
        let diag = match spec.diagnostics {
            Some(d) if t % d.every == 0 && problem.grad_moments(&x).is_some() => {
                let state = opt
                    .as_ref()
                    .map(|o| o.state().clone())
                    .unwrap_or_else(|| OptimizerState::new(cfg.algorithm, &partition));
                estimator_stats(problem, &x, &state, &cfg, d.n_mc, cfg.epsilon, &mut mc_rng)
                    .ok()
                    .map(|s| s.summary())
            }
            _ => None,
        };
        let record = TrajectoryRecord {
            t,
            dist_sq: dist,
            loss: problem.loss(&x),
            alpha_t,
            aiming_value: aiming,
            estimator_diag: diag,
        };
        if let Some(d) = dist {
            if !(d <= DIVERGENCE_THRESHOLD) {
                return Err(Error::Diverged(Box::new(Divergence {
                    t,
                    dist_sq: d,
                    records: vec![record],
                })));
            }
        }
        sink(record);
        if t == spec.steps {
            break;
        }

        problem.sample_gradient_into(&x, &mut rng, &mut g);
        match opt.as_mut() {
            Some(o) => o.step_slice(&mut x, &g, alpha_t)?,
            None => {
                let mut gm = problem.grad_moments(&x).ok_or(Error::MissingOracle)?;
                let mut decay = lambda;
                if !cfg.decoupled && lambda > 0.0 {
                    let shift: Vec<f64> = x.iter().map(|v| lambda * v).collect();
                    g.iter_mut().zip(&shift).for_each(|(gi, s)| *gi += s);
                    gm = gm.shifted(&shift)?;
                    decay = 0.0;
                }
                if alpha_t * decay >= 1.0 {
                    return Err(Error::DecayTooLarge(alpha_t * decay));
                }
                let oracle = gm.oracle(partition.clone())?;
                let xv = ParamVector::new(std::mem::take(&mut x), partition.clone())?;
                let gv = ParamVector::new(g.clone(), partition.clone())?;
                x = conceptual_step(&oracle, &xv, &gv, alpha_t, decay)?.into_values();
            }
        }
    }
    Ok(())
}

/// One seeded trajectory with `steps + 1` records (`t = 0..=steps`).
pub fn run_trajectory(
    problem: &dyn StochasticProblem,
    spec: &TrajectorySpec,
    base_seed: u64,
    index: u64,
) -> Result<Vec<TrajectoryRecord>> {
    let mut records = Vec::with_capacity(spec.steps + 1);
    match simulate(problem, spec, base_seed, index, |r| records.push(r)) {
        Ok(()) => Ok(records),
        Err(Error::Diverged(mut d)) => {
            records.append(&mut d.records);
            d.records = records;
            Err(Error::Diverged(d))
        }
        Err(e) => Err(e),
    }
}

/// Pointwise mean and standard error over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanCurve {
    pub t: Vec<usize>,
    pub alpha_t: Vec<f64>,
    /// Empty when the problem has no known target.
    pub mean_dist_sq: Vec<f64>,
    pub se_dist_sq: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub se_loss: Vec<f64>,
    /// Minimum aiming value over seeds, when recorded.
    pub aiming_min: Vec<Option<f64>>,
    /// Largest diagnostic `σ_t` over seeds, when recorded.
    pub sigma_t: Vec<Option<f64>>,
    pub n_seeds: usize,
}

impl MeanCurve {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn has_target(&self) -> bool {
        !self.mean_dist_sq.is_empty()
    }
}

/// Welford accumulator per time step, mergeable in a fixed order.
#[derive(Clone)]
struct Accum {
    count: f64,
    dist: Vec<(f64, f64)>,
    loss: Vec<(f64, f64)>,
    aiming: Vec<Option<f64>>,
    sigma: Vec<Option<f64>>,
    alpha: Vec<f64>,
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) | (None, x) => x,
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) | (None, x) => x,
    }
}

impl Accum {
    fn new(len: usize, with_dist: bool) -> Self {
        Self {
            count: 0.0,
            dist: if with_dist {
                vec![(0.0, 0.0); len]
            } else {
                Vec::new()
            },
            loss: vec![(0.0, 0.0); len],
            aiming: vec![None; len],
            sigma: vec![None; len],
            alpha: vec![0.0; len],
        }
    }

    fn welford(slot: &mut (f64, f64), count: f64, value: f64) {
        let delta = value - slot.0;
        slot.0 += delta / count;
        slot.1 += delta * (value - slot.0);
    }

    fn add_record(&mut self, r: &TrajectoryRecord) {
        let t = r.t;
        if let (Some(d), false) = (r.dist_sq, self.dist.is_empty()) {
            Self::welford(&mut self.dist[t], self.count, d);
        }
        Self::welford(&mut self.loss[t], self.count, r.loss);
        self.aiming[t] = min_opt(self.aiming[t], r.aiming_value);
        self.sigma[t] = max_opt(self.sigma[t], r.estimator_diag.map(|d| d.sigma_t));
        self.alpha[t] = r.alpha_t;
    }

    fn chan(a: &mut (f64, f64), na: f64, b: (f64, f64), nb: f64) {
        let n = na + nb;
        let delta = b.0 - a.0;
        a.0 += delta * nb / n;
        a.1 += b.1 + delta * delta * na * nb / n;
    }

    fn merge(&mut self, other: Accum) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = other;
            return;
        }
        let (na, nb) = (self.count, other.count);
        for (a, b) in self.dist.iter_mut().zip(other.dist) {
            Self::chan(a, na, b, nb);
        }
        for (a, b) in self.loss.iter_mut().zip(other.loss) {
            Self::chan(a, na, b, nb);
        }
        for (a, b) in self.aiming.iter_mut().zip(other.aiming) {
            *a = min_opt(*a, b);
        }
        for (a, b) in self.sigma.iter_mut().zip(other.sigma) {
            *a = max_opt(*a, b);
        }
        self.count = na + nb;
    }
}

/// Mean trajectory over `n_seeds` seeds `0..n_seeds` under `base_seed`.
/// Seeds run in parallel; the reduction order is fixed, so the output does
/// not depend on the number of threads.
pub fn mean_trajectory(
    problem: &dyn StochasticProblem,
    spec: &TrajectorySpec,
    n_seeds: usize,
    base_seed: u64,
) -> Result<MeanCurve> {
    if n_seeds < 2 {
        return Err(Error::param(
            "n_seeds",
            format!("need at least 2 seeds, got {n_seeds}"),
        ));
    }
    spec.validate(problem)?;
    let len = spec.steps + 1;
    let with_dist = problem.x_star().is_some();
    let chunks: Vec<Result<Accum>> = (0..n_seeds)
        .collect::<Vec<_>>()
        .par_chunks(SEED_CHUNK)
        .map(|seeds| {
            let mut acc = Accum::new(len, with_dist);
            for &s in seeds {
                acc.count += 1.0;
                let r = simulate(problem, spec, base_seed, s as u64, |rec| {
                    acc.add_record(&rec)
                });
                if let Err(e) = r {
                    return Err(match e {
                        // replay the seed to attach the full record list
                        Error::Diverged(_) => run_trajectory(problem, spec, base_seed, s as u64)
                            .err()
                            .unwrap_or(e),
                        e => e,
                    });
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accum::new(len, with_dist);
    for c in chunks {
        total.merge(c?);
    }
    let n = total.count;
    let se = |slot: &(f64, f64)| (slot.1 / (n - 1.0) / n).sqrt();
    Ok(MeanCurve {
        t: (0..len).collect(),
        alpha_t: total.alpha,
        mean_dist_sq: total.dist.iter().map(|s| s.0).collect(),
        se_dist_sq: total.dist.iter().map(se).collect(),
        mean_loss: total.loss.iter().map(|s| s.0).collect(),
        se_loss: total.loss.iter().map(se).collect(),
        aiming_min: total.aiming,
        sigma_t: total.sigma,
        n_seeds,
    })
}
