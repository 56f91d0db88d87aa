use crate::analysis::{Check, Report};
use crate::error::{ensure_len, Error, Result};
use crate::optim::MomentOracle;
use crate::vector::{dot, sign};

use super::StochasticProblem;

/// `⟨x − x*, E d / √E d² + λ x⟩ − λ ‖x − x*‖²`; nonnegative iff the aiming
/// condition holds at `x`.
pub fn aiming_value(x: &[f64], x_star: &[f64], lambda: f64, oracle: &MomentOracle) -> Result<f64> {
    ensure_len(x_star.len(), x.len())?;
    ensure_len(oracle.partition().dim(), x.len())?;
    let u = oracle.normalized_mean()?;
    let mut inner = 0.0;
    let mut dist = 0.0;
    for i in 0..x.len() {
        let e = x[i] - x_star[i];
        inner += e * (u[i] + lambda * x[i]);
        dist += e * e;
    }
    Ok(inner - lambda * dist)
}

/// The same quantity written as `⟨x − x*, E d / √E d² + λ x*⟩`.
pub fn aiming_value_rearranged(
    x: &[f64],
    x_star: &[f64],
    lambda: f64,
    oracle: &MomentOracle,
) -> Result<f64> {
    ensure_len(x_star.len(), x.len())?;
    let u = oracle.normalized_mean()?;
    Ok((0..x.len())
        .map(|i| (x[i] - x_star[i]) * (u[i] + lambda * x_star[i]))
        .sum())
}

/// Aiming value against the problem's own target.
pub fn aiming_inner_product(
    problem: &dyn StochasticProblem,
    x: &[f64],
    lambda: f64,
    direction_oracle: &MomentOracle,
) -> Result<f64> {
    let x_star = problem.x_star().ok_or(Error::MissingTarget)?;
    aiming_value(x, x_star.values(), lambda, direction_oracle)
}

const LOG_GRID_POINTS: usize = 100;

/// `f(x) = log x` on the grid `{0.1, 0.2, …, 10}` with target `0`: the sign
/// aiming inner product is `x ≥ 0` everywhere while `f″ = −1/x² < 0`.
pub fn counterexample_log_aiming() -> Report {
    let grid: Vec<f64> = (1..=LOG_GRID_POINTS).map(|k| k as f64 / 10.0).collect();
    let inner: Vec<f64> = grid.iter().map(|&x| (x - 0.0) * sign(1.0 / x)).collect();
    let curvature: Vec<f64> = grid.iter().map(|&x| -1.0 / (x * x)).collect();
    let aiming_holds = inner.iter().filter(|&&v| v >= 0.0).count();
    let convex_fails = curvature.iter().filter(|&&c| c < 0.0).count();
    let min_inner = inner.iter().copied().fold(f64::INFINITY, f64::min);
    let max_curv = curvature.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut r = Report::new("counterexample: aiming but not convex (f = log x, x* = 0)");
    r.note(format!(
        "grid x = 0.1, 0.2, ..., 10 ({LOG_GRID_POINTS} points)"
    ));
    r.push(Check::at_least(
        "min over grid of <x - x*, sign f'(x)>",
        min_inner,
        0.0,
        0.0,
    ));
    r.push(Check::at_most("max over grid of f''(x)", max_curv, 0.0, 0.0).strict());
    r.push(Check::equal(
        "grid points where aiming holds",
        aiming_holds as f64,
        LOG_GRID_POINTS as f64,
        0.0,
    ));
    r.push(Check::equal(
        "grid points where convexity fails",
        convex_fails as f64,
        LOG_GRID_POINTS as f64,
        0.0,
    ));
    r.push(Check::equal(
        "<x - x*, sign f'(x)> at x = 2",
        inner[19],
        2.0,
        0.0,
    ));
    r.push(Check::equal("f''(0.1)", curvature[0], -100.0, 1e-12));
    r
}

const QUAD_A: [[f64; 2]; 2] = [[1.0, -2.0], [-2.0, 4.0]];

fn sign_aiming_2d(x: [f64; 2]) -> f64 {
    let ax = [
        QUAD_A[0][0] * x[0] + QUAD_A[0][1] * x[1],
        QUAD_A[1][0] * x[0] + QUAD_A[1][1] * x[1],
    ];
    dot(&x, &[sign(ax[0]), sign(ax[1])])
}

/// Eigenvalues of a symmetric 2×2 matrix from its characteristic polynomial.
fn sym2_eigenvalues(a: [[f64; 2]; 2]) -> [f64; 2] {
    let half_tr = 0.5 * (a[0][0] + a[1][1]);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (half_tr * half_tr - det).max(0.0).sqrt();
    [half_tr - disc, half_tr + disc]
}

/// `f(x) = ½ xᵀ A x` with `A = [[1, −2], [−2, 4]] ⪰ 0`: convex with target
/// `0`, yet the sign aiming inner product is negative at `(1.5, 1)`.
pub fn counterexample_quadratic_not_aiming() -> Report {
    let at = sign_aiming_2d([1.5, 1.0]);
    let at_ones = sign_aiming_2d([1.0, 1.0]);
    let eig = sym2_eigenvalues(QUAD_A);
    let mut r = Report::new("counterexample: convex but not aiming (A = [[1,-2],[-2,4]], x* = 0)");
    r.push(Check::equal(
        "<x - x*, sign(Ax)> at x = (1.5, 1)",
        at,
        -0.5,
        0.0,
    ));
    r.push(Check::at_most("aiming violated at x = (1.5, 1)", at, 0.0, 0.0).strict());
    r.push(Check::equal(
        "<x - x*, sign(Ax)> at x = (1, 1)",
        at_ones,
        0.0,
        0.0,
    ));
    r.push(Check::equal("smallest eigenvalue of A", eig[0], 0.0, 1e-12));
    r.push(Check::equal("largest eigenvalue of A", eig[1], 5.0, 1e-12));
    r.push(Check::at_least(
        "A is positive semidefinite (min eigenvalue)",
        eig[0],
        0.0,
        1e-12,
    ));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::NoisyQuadratic;
    use crate::rng::{stream, Purpose};
    use crate::vector::{BlockPartition, ParamVector};
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    #[test]
    fn zero_at_target() {
        let p = NoisyQuadratic::isotropic(3, 1.0, 0.5, vec![1.0, 2.0, 3.0]).unwrap();
        let xs = p.x_star().unwrap().values().to_vec();
        let o = p
            .grad_moments(&xs)
            .unwrap()
            .oracle(p.partition().clone())
            .unwrap();
        assert_eq!(aiming_inner_product(&p, &xs, 0.7, &o).unwrap(), 0.0);
    }

    #[test]
    fn aligned_sign_direction_in_one_dimension() {
        let o = MomentOracle::new(ParamVector::from_values(vec![1.0]).unwrap(), vec![1.0]).unwrap();
        assert_eq!(aiming_value(&[3.5], &[1.0], 0.0, &o).unwrap(), 2.5);
    }

    #[test]
    fn full_block_convex_quadratic_is_aiming() {
        let n = 4;
        let p = Arc::new(BlockPartition::full(n).unwrap());
        let h = vec![0.5, 1.0, 2.0, 4.0];
        let q = NoisyQuadratic::new(
            h.clone(),
            vec![0.3; n],
            vec![1.0, -1.0, 0.0, 2.0],
            p.clone(),
        )
        .unwrap();
        let xs = q.x_star().unwrap().values().to_vec();
        let mut rng = stream(4, 0, Purpose::Instance);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..n)
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let gm = q.grad_moments(&x).unwrap();
            let o = gm.oracle(p.clone()).unwrap();
            let v = aiming_value(&x, &xs, 0.0, &o).unwrap();
            // analytic: <x - x*, grad F> / sqrt(E||g||^2)
            let grad: Vec<f64> = (0..n).map(|i| h[i] * (x[i] - xs[i])).collect();
            let e: Vec<f64> = (0..n).map(|i| x[i] - xs[i]).collect();
            let expected = dot(&e, &grad) / gm.second.iter().sum::<f64>().sqrt();
            assert!(v >= 0.0);
            assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn missing_target_is_reported() {
        let p = crate::problems::LogisticProblem::synthetic(10, 2, 5, 0).unwrap();
        let o = MomentOracle::new(
            ParamVector::from_values(vec![1.0, 1.0]).unwrap(),
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            aiming_inner_product(&p, &[0.0, 0.0], 0.0, &o),
            Err(Error::MissingTarget)
        ));
    }

    #[test]
    fn counterexample_reports_pass() {
        assert!(counterexample_log_aiming().passed());
        let q = counterexample_quadratic_not_aiming();
        assert!(q.passed());
        assert_eq!(sign_aiming_2d([1.5, 1.0]), -0.5);
        assert_eq!(sym2_eigenvalues(QUAD_A), [0.0, 5.0]);
    }
}
