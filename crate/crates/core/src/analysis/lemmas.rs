//! Numerical checks of the supporting lemmas.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{ensure_len, Error, Result};
use crate::optim::{conceptual_step, optimal_stepsizes, MomentOracle};
use crate::problems::StochasticProblem;
use crate::rng::{stream, Purpose, StreamRng};
use crate::vector::{dist_sq, BlockPartition, ParamVector};

use super::b_star;
use super::report::{Check, Report};

/// `Y = μ_Y + s·y_sd·(ρ b + √(1−ρ²) a)` and `Z = shift + μ_Z exp(s b)` with
/// independent standard normals `a, b` and noise scale `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioParams {
    pub mu_y: f64,
    pub y_sd: f64,
    pub rho: f64,
    pub mu_z: f64,
    pub shift: f64,
}

impl Default for RatioParams {
    fn default() -> Self {
        Self {
            mu_y: 1.0,
            y_sd: 1.0,
            rho: 0.5,
            mu_z: 1.0,
            shift: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub scale: f64,
    /// Sample mean of `Y/√Z`.
    pub mc: f64,
    pub mc_se: f64,
    /// Three-term expansion evaluated with sample moments.
    pub expansion: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioExpansionReport {
    pub rows: Vec<RatioRow>,
    pub report: Report,
}

/// `E[Y]/√E[Z] · (1 − Cov(Y,Z)/(2E[Y]E[Z]) + 3Var(Z)/(8E[Z]²))`, written so
/// that `E[Y] = 0` is allowed.
pub fn ratio_expansion(mean_y: f64, mean_z: f64, cov_yz: f64, var_z: f64) -> f64 {
    mean_y / mean_z.sqrt() - cov_yz / (2.0 * mean_z.powf(1.5))
        + 3.0 * mean_y * var_z / (8.0 * mean_z.powf(2.5))
}

/// Compares the Monte Carlo mean of `Y/√Z` with its second-order expansion
/// for each noise scale, reusing the same draws across scales. The residual
/// must shrink at least quadratically: between consecutive scales the ratio
/// must reach half of `(s_i / s_{i+1})²`.
pub fn verify_ratio_expansion(
    params: RatioParams,
    n_mc: usize,
    noise_scales: &[f64],
    seed: u64,
) -> Result<RatioExpansionReport> {
    if n_mc < 2 {
        return Err(Error::InsufficientData(
            "ratio expansion needs at least 2 draws".into(),
        ));
    }
    if noise_scales.is_empty() {
        return Err(Error::param("noise_scales", "list is empty"));
    }
    if noise_scales.windows(2).any(|w| !(w[1] < w[0])) || noise_scales.iter().any(|s| *s < 0.0) {
        return Err(Error::param(
            "noise_scales",
            "must be nonnegative and strictly decreasing",
        ));
    }
    if !(-1.0..=1.0).contains(&params.rho) {
        return Err(Error::param("rho", "must lie in [-1, 1]"));
    }
    let mut rng = stream(seed, 0, Purpose::MonteCarlo);
    let a: Vec<f64> = (0..n_mc).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..n_mc).map(|_| rng.sample(StandardNormal)).collect();
    let perp = (1.0 - params.rho * params.rho).sqrt();
    let nf = n_mc as f64;

    let mut rows = Vec::with_capacity(noise_scales.len());
    for &s in noise_scales {
        let mut y = Vec::with_capacity(n_mc);
        let mut z = Vec::with_capacity(n_mc);
        for i in 0..n_mc {
            let zi = params.shift + params.mu_z * (s * b[i]).exp();
            if !(zi > 0.0) {
                return Err(Error::NonPositive { t: i, value: zi });
            }
            y.push(params.mu_y + s * params.y_sd * (params.rho * b[i] + perp * a[i]));
            z.push(zi);
        }
        let (y0, z0) = (y[0], z[0]);
        let my = y0 + y.iter().map(|v| v - y0).sum::<f64>() / nf;
        let mz = z0 + z.iter().map(|v| v - z0).sum::<f64>() / nf;
        let mut cov = 0.0;
        let mut var_z = 0.0;
        for i in 0..n_mc {
            cov += (y[i] - my) * (z[i] - mz);
            var_z += (z[i] - mz) * (z[i] - mz);
        }
        cov /= nf;
        var_z /= nf;
        let ratios: Vec<f64> = y.iter().zip(&z).map(|(yi, zi)| yi / zi.sqrt()).collect();
        let mc = ratios.iter().sum::<f64>() / nf;
        let var_r = ratios.iter().map(|r| (r - mc) * (r - mc)).sum::<f64>() / (nf - 1.0);
        let expansion = ratio_expansion(my, mz, cov, var_z);
        rows.push(RatioRow {
            scale: s,
            mc,
            mc_se: (var_r / nf).sqrt(),
            expansion,
            residual: (mc - expansion).abs(),
        });
    }

    let mut report = Report::new("ratio expansion E[Y/sqrt Z]");
    report.note(format!(
        "mu_y={} y_sd={} rho={} mu_z={} shift={} n_mc={n_mc}; common draws across scales",
        params.mu_y, params.y_sd, params.rho, params.mu_z, params.shift
    ));
    for r in &rows {
        report.note(format!(
            "s={}: mc={} expansion={} residual={} mc_se={}",
            r.scale, r.mc, r.expansion, r.residual, r.mc_se
        ));
    }
    for w in rows.windows(2) {
        let (hi, lo) = (w[0], w[1]);
        let required = (hi.scale / lo.scale).powi(2) / 2.0;
        let ratio = if lo.residual == 0.0 {
            f64::INFINITY
        } else {
            hi.residual / lo.residual
        };
        report.push(Check::at_least(
            format!("residual ratio s={} -> s={}", hi.scale, lo.scale),
            ratio,
            required,
            0.0,
        ));
    }
    if rows.len() == 1 {
        let r = rows[0];
        report.push(Check::at_most(
            format!("residual at s={}", r.scale),
            r.residual,
            3.0 * r.mc_se,
            1e-12,
        ));
    }
    Ok(RatioExpansionReport { rows, report })
}

/// One Chung-type recursion and its numeric limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChungRow {
    pub a: f64,
    pub p: f64,
    pub q: f64,
    pub b: f64,
    /// Theoretical limit of the scaled sequence.
    pub bound: f64,
    /// Scaled sequence at `T/16`.
    pub at_sixteenth: f64,
    /// Scaled sequence at `T`.
    pub at_horizon: f64,
    /// Exponent of the leading finite-`T` correction.
    pub correction_exponent: f64,
    /// Richardson extrapolation from the two values above.
    pub extrapolated: f64,
}

fn richardson(at_horizon: f64, at_sixteenth: f64, kappa: f64) -> f64 {
    let r = 16f64.powf(kappa);
    (r * at_horizon - at_sixteenth) / (r - 1.0)
}

/// Iterates `X_{t+1} = (1 − a/t^p) X_t + b/t^q` from the first `t` with
/// `a/t^p < 1` and returns `t^{q−p} X_t` at `T/16` and `T`.
fn iterate_chung(a: f64, p: f64, q: f64, b: f64, x_start: f64, horizon: u64) -> (f64, f64) {
    let mut t: u64 = 1;
    while a / (t as f64).powf(p) >= 1.0 {
        t += 1;
    }
    let mark = horizon / 16;
    let scale = q - p;
    let mut x = x_start;
    let mut at_mark = f64::NAN;
    while t < horizon {
        if t == mark {
            at_mark = (t as f64).powf(scale) * x;
        }
        let tf = t as f64;
        x = (1.0 - a / tf.powf(p)) * x + b / tf.powf(q);
        t += 1;
    }
    (at_mark, (horizon as f64).powf(scale) * x)
}

/// Runs the two Chung recursions and the `b = 0` control to `horizon`.
///
/// The second recursion approaches its limit with a relative error of order
/// `t^{p−1}`, about 1.3% at `t = 10⁷`, so the checked limit is the Richardson
/// extrapolation from `T/16` and `T` with that known exponent. Raw values are
/// reported alongside.
pub fn verify_chung_recursions(horizon: u64) -> Result<(Vec<ChungRow>, Report)> {
    if horizon < 1600 {
        return Err(Error::param("horizon", "need at least 1600 iterations"));
    }
    let cases: [(f64, f64, f64, f64, f64); 3] = [
        // first lemma: q = p + 1
        (2.0, 1.0, 2.0, 1.0, 0.0),
        // second lemma
        (1.0, 0.75, 1.5, 1.0, 0.0),
        // no forcing: the sequence and its scaled limit vanish
        (2.0, 1.0, 2.0, 0.0, 1.0),
    ];
    let mut rows = Vec::new();
    let mut report = Report::new("Chung recursions");
    for (a, p, q, b, x0) in cases {
        let first_lemma = (q - p - 1.0).abs() < 1e-15;
        let bound = if first_lemma { b / (a - p) } else { b / a };
        let kappa = if first_lemma {
            (a - p).min(1.0)
        } else {
            1.0 - p
        };
        let (at_sixteenth, at_horizon) = iterate_chung(a, p, q, b, x0, horizon);
        let extrapolated = richardson(at_horizon, at_sixteenth, kappa);
        rows.push(ChungRow {
            a,
            p,
            q,
            b,
            bound,
            at_sixteenth,
            at_horizon,
            correction_exponent: kappa,
            extrapolated,
        });
        report.note(format!(
            "a={a} p={p} q={q} b={b}: scaled value {at_sixteenth} at T/16, {at_horizon} at T={horizon}, extrapolated {extrapolated}"
        ));
        let name = format!("limit of t^{} X_t (a={a}, p={p}, b={b})", q - p);
        if b == 0.0 {
            report.push(Check::at_most(name, at_horizon.abs(), 0.0, 1e-2));
        } else {
            report.push(Check::equal(name, extrapolated, bound, 1e-2 * bound));
        }
    }
    Ok((rows, report))
}

/// Outcome of the one-step contraction check at a single state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub aiming: f64,
    pub mean_next_dist_sq: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Monte Carlo mean of `‖x⁺ − x*‖²` after one conceptual step with decoupled
/// decay `lambda`, against `(1 − αλ)² ‖x − x*‖² + α² B*` plus three standard errors.
pub fn one_step_contraction(
    problem: &dyn StochasticProblem,
    x: &[f64],
    alpha: f64,
    lambda: f64,
    n_mc: usize,
    rng: &mut StreamRng,
) -> Result<ContractionCheck> {
    let x_star = problem.x_star().ok_or(Error::MissingTarget)?.clone();
    ensure_len(problem.dim(), x.len())?;
    if alpha * lambda >= 1.0 {
        return Err(Error::DecayTooLarge(alpha * lambda));
    }
    if n_mc < 2 {
        return Err(Error::InsufficientData(
            "contraction check needs at least 2 draws".into(),
        ));
    }
    let partition = problem.partition().clone();
    let gm = problem.grad_moments(x).ok_or(Error::MissingOracle)?;
    let oracle = gm.oracle(partition.clone())?;
    let aiming = crate::problems::aiming_value(x, x_star.values(), lambda, &oracle)?;
    let xv = ParamVector::new(x.to_vec(), partition.clone())?;
    let mut g = vec![0.0; x.len()];
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..n_mc {
        problem.sample_gradient_into(x, rng, &mut g);
        let gv = ParamVector::new(g.clone(), partition.clone())?;
        let next = conceptual_step(&oracle, &xv, &gv, alpha, lambda)?;
        let d = dist_sq(next.values(), x_star.values());
        let delta = d - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (d - mean);
    }
    let se = (m2 / (n_mc as f64 - 1.0) / n_mc as f64).sqrt();
    let bstar = b_star(partition.num_blocks(), lambda, x_star.values());
    let bound =
        (1.0 - alpha * lambda).powi(2) * dist_sq(x, x_star.values()) + alpha * alpha * bstar;
    Ok(ContractionCheck {
        aiming,
        mean_next_dist_sq: mean,
        se,
        bound,
        pass: mean <= bound + 3.0 * se,
    })
}

/// Grid search over `γ ∈ [−2, 2]` of the expected one-step distance
/// `E‖x − γ d − x*‖²` on random single-block oracle instances; the grid
/// minimizer must lie within one grid cell of the closed-form stepsize.
pub fn verify_optimal_stepsizes(
    n_instances: usize,
    grid_points: usize,
    seed: u64,
) -> Result<Report> {
    if grid_points < 3 {
        return Err(Error::param("grid_points", "need at least 3 grid points"));
    }
    let mut rng = stream(seed, 0, Purpose::Instance);
    let cell = 4.0 / (grid_points - 1) as f64;
    let mut report = Report::new("optimal stepsizes vs grid search");
    report.note(format!(
        "{n_instances} instances, {grid_points} grid points on [-2, 2], cell {cell}; instances with |gamma| > 1.9 are redrawn"
    ));
    let mut worst: f64 = 0.0;
    let mut within = 0usize;
    let mut accepted = 0usize;
    while accepted < n_instances {
        let n = rng.random_range(1..=5usize);
        let p = Arc::new(BlockPartition::full(n)?);
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mean: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let var: f64 = (0..n).map(|_| rng.random::<f64>()).sum();
        let second = mean.iter().map(|m| m * m).sum::<f64>() + var;
        let oracle = MomentOracle::new(ParamVector::new(mean.clone(), p.clone())?, vec![second])?;
        let xv = ParamVector::new(e.clone(), p.clone())?;
        let gamma = optimal_stepsizes(&oracle, &xv, &ParamVector::zeros(p))?[0];
        if gamma.abs() > 1.9 {
            continue;
        }
        accepted += 1;
        let ee: f64 = e.iter().map(|v| v * v).sum();
        let em: f64 = e.iter().zip(&mean).map(|(a, b)| a * b).sum();
        let surrogate = |g: f64| ee - 2.0 * g * em + g * g * second;
        let mut best = (f64::INFINITY, 0.0);
        for j in 0..grid_points {
            let g = -2.0 + cell * j as f64;
            let v = surrogate(g);
            if v < best.0 {
                best = (v, g);
            }
        }
        let dev = (best.1 - gamma).abs();
        worst = worst.max(dev);
        if dev <= cell {
            within += 1;
        }
    }
    report.push(Check::equal(
        "instances with grid minimizer within one cell",
        within as f64,
        n_instances as f64,
        0.0,
    ));
    report.push(Check::at_most(
        "largest |grid argmin - gamma_hat|",
        worst,
        cell,
        0.0,
    ));
    Ok(report)
}
