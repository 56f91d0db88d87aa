//! Stepsize schedules `alpha_t`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    InverseTime,
    Power,
    WarmupCosine,
    WarmupLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    kind: ScheduleKind,
    alpha: f64,
    power: f64,
    warmup_steps: usize,
    total_steps: usize,
    alpha_min_ratio: f64,
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        Self::build(ScheduleKind::Constant, alpha, 1.0, 0, 0, 1.0)
    }

    /// `alpha / (t + 1)`.
    pub fn inverse_time(alpha: f64) -> Result<Self> {
        Self::build(ScheduleKind::InverseTime, alpha, 1.0, 0, 0, 0.0)
    }

    /// `alpha / (t + 1)^p` with `1/2 < p < 1`.
    pub fn power(alpha: f64, p: f64) -> Result<Self> {
        Self::build(ScheduleKind::Power, alpha, p, 0, 0, 0.0)
    }

    pub fn warmup_cosine(
        alpha: f64,
        warmup_steps: usize,
        total_steps: usize,
        alpha_min_ratio: f64,
    ) -> Result<Self> {
        Self::build(
            ScheduleKind::WarmupCosine,
            alpha,
            1.0,
            warmup_steps,
            total_steps,
            alpha_min_ratio,
        )
    }

    pub fn warmup_linear(
        alpha: f64,
        warmup_steps: usize,
        total_steps: usize,
        alpha_min_ratio: f64,
    ) -> Result<Self> {
        Self::build(
            ScheduleKind::WarmupLinear,
            alpha,
            1.0,
            warmup_steps,
            total_steps,
            alpha_min_ratio,
        )
    }

    /// Generic constructor; fields irrelevant to `kind` are ignored.
    pub fn build(
        kind: ScheduleKind,
        alpha: f64,
        power: f64,
        warmup_steps: usize,
        total_steps: usize,
        alpha_min_ratio: f64,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param(
                "alpha",
                format!("must be positive, got {alpha}"),
            ));
        }
        if kind == ScheduleKind::Power && !(power > 0.5 && power < 1.0) {
            return Err(Error::param(
                "power",
                format!("must lie in (1/2, 1), got {power}"),
            ));
        }
        if matches!(
            kind,
            ScheduleKind::WarmupCosine | ScheduleKind::WarmupLinear
        ) {
            if total_steps == 0 {
                return Err(Error::param(
                    "total_steps",
                    "must be positive for warmup schedules",
                ));
            }
            if warmup_steps > total_steps {
                return Err(Error::param(
                    "warmup_steps",
                    format!("{warmup_steps} exceeds total_steps {total_steps}"),
                ));
            }
            if !(0.0..=1.0).contains(&alpha_min_ratio) {
                return Err(Error::param(
                    "alpha_min_ratio",
                    format!("must lie in [0, 1], got {alpha_min_ratio}"),
                ));
            }
        }
        Ok(Self {
            kind,
            alpha,
            power,
            warmup_steps,
            total_steps,
            alpha_min_ratio,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn power_exponent(&self) -> f64 {
        self.power
    }

    /// Largest value the schedule ever emits.
    pub fn peak(&self) -> f64 {
        self.alpha
    }

    pub fn value_at(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self.kind {
            ScheduleKind::Constant => self.alpha,
            ScheduleKind::InverseTime => self.alpha / (tf + 1.0),
            ScheduleKind::Power => self.alpha / (tf + 1.0).powf(self.power),
            ScheduleKind::WarmupCosine | ScheduleKind::WarmupLinear => self.warmup_value(t),
        }
    }

    fn warmup_value(&self, t: usize) -> f64 {
        let floor = self.alpha * self.alpha_min_ratio;
        if t < self.warmup_steps {
            return self.alpha * (t as f64 + 1.0) / self.warmup_steps as f64;
        }
        if t >= self.total_steps {
            return floor;
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let progress = (t - self.warmup_steps) as f64 / span;
        match self.kind {
            ScheduleKind::WarmupCosine => {
                floor + (self.alpha - floor) * 0.5 * (1.0 + (PI * progress).cos())
            }
            _ => self.alpha - (self.alpha - floor) * progress,
        }
    }

    /// Checks the stepsize conditions of the almost-sure convergence theorem
    /// against a weight-decay parameter `lambda`.
    pub fn validate_against_lambda(&self, lambda: f64) -> ScheduleCheck {
        let mut violations = Vec::new();
        // alpha > 0 is enforced at construction, so alpha_t >= 0 always holds.
        let peak_product = self.peak() * lambda;
        if peak_product > 1.0 {
            violations.push(ScheduleViolation::PeakTimesLambdaAboveOne { peak_product });
        }
        let (unsummable, square_summable) = match self.kind {
            ScheduleKind::Constant => (true, false),
            ScheduleKind::InverseTime => (true, true),
            ScheduleKind::Power => (self.power <= 1.0, self.power > 0.5),
            // clamped tail: a positive floor repeats forever, a zero floor stops
            ScheduleKind::WarmupCosine | ScheduleKind::WarmupLinear => {
                let positive_tail = self.alpha_min_ratio > 0.0;
                (positive_tail, !positive_tail)
            }
        };
        if !unsummable {
            violations.push(ScheduleViolation::SumFinite);
        }
        if !square_summable {
            violations.push(ScheduleViolation::SquaresNotSummable);
        }
        ScheduleCheck {
            violations,
            unsummable,
            square_summable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleViolation {
    /// `alpha_0 * lambda > 1` at the peak of the schedule.
    PeakTimesLambdaAboveOne { peak_product: f64 },
    /// `sum alpha_t < infinity`.
    SumFinite,
    /// `sum alpha_t^2 = infinity`.
    SquaresNotSummable,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleViolation::PeakTimesLambdaAboveOne { peak_product } => {
                write!(f, "peak alpha * lambda = {peak_product} > 1")
            }
            ScheduleViolation::SumFinite => write!(f, "sum of alpha_t is finite"),
            ScheduleViolation::SquaresNotSummable => write!(f, "sum of alpha_t^2 diverges"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCheck {
    pub violations: Vec<ScheduleViolation>,
    pub unsummable: bool,
    pub square_summable: bool,
}

impl ScheduleCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_peak_violation(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::PeakTimesLambdaAboveOne { .. }))
    }
}
