use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 20;

/// Least-squares fit of `log y = intercept + slope · log(t + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
    pub points: usize,
}

/// Fits the log-log slope of `values[t]` against `t + 1` over `t ∈ [lo, hi]`.
pub fn fit_rate(values: &[f64], window: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = window;
    if lo < 1 || hi < lo {
        return Err(Error::param(
            "window",
            format!("need 1 <= t_lo <= t_hi, got [{lo}, {hi}]"),
        ));
    }
    let hi_clamped = hi.min(values.len().saturating_sub(1));
    if hi_clamped < lo || hi_clamped + 1 - lo < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least {MIN_FIT_POINTS} points in [{lo}, {hi}], curve has {}",
            values.len()
        )));
    }
    let mut pts = Vec::with_capacity(hi_clamped + 1 - lo);
    for (t, &v) in values.iter().enumerate().take(hi_clamped + 1).skip(lo) {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositive { t, value: v });
        }
        pts.push(((t as f64 + 1.0).ln(), v.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window: (lo, hi_clamped),
        points: pts.len(),
    })
}

/// Window covering the last two decades of a horizon `T`: `[T/100, T]`.
pub fn default_window(horizon: usize) -> (usize, usize) {
    ((horizon / 100).max(1), horizon)
}
