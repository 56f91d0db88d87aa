//! Trajectory statistics, rate fits, estimator Monte Carlo and lemma checks.

mod catalog;
mod estimator;
mod lemmas;
mod rate;
mod report;
mod sigma;
mod trajectory;

pub use catalog::{estimator_catalog, CatalogFixture};
pub use estimator::{
    adam_variance, affine_raw_moments, bcos_c_bias, bcos_c_variance, ema_bias, ema_variance,
    estimator_stats, fit_tau, tau_frontier, variance_of_square, EstimatorStats, EstimatorSummary,
    MIN_MC_DRAWS,
};
pub use lemmas::{
    one_step_contraction, ratio_expansion, verify_chung_recursions, verify_optimal_stepsizes,
    verify_ratio_expansion, ChungRow, ContractionCheck, RatioExpansionReport, RatioParams,
    RatioRow,
};
pub use rate::{default_window, fit_rate, RateFit, MIN_FIT_POINTS};
pub use report::{write_checks_csv, Check, Relation, Report};
pub use sigma::{neighborhood_radius, sigma_t_leading, SigmaBreakdown};
pub use trajectory::{
    mean_trajectory, run_trajectory, DiagnosticsSpec, MeanCurve, TrajectoryRecord, TrajectorySpec,
    DIVERGENCE_THRESHOLD,
};

/// `B* = n + λ² ‖x*‖² + 2λ ‖x*‖₁`.
pub fn b_star(n: usize, lambda: f64, x_star: &[f64]) -> f64 {
    let sq: f64 = x_star.iter().map(|v| v * v).sum();
    let l1: f64 = x_star.iter().map(|v| v.abs()).sum();
    n as f64 + lambda * lambda * sq + 2.0 * lambda * l1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_star_examples() {
        assert_eq!(b_star(7, 0.0, &[1.0; 7]), 7.0);
        assert_eq!(b_star(1, 1.0, &[1.0]), 4.0);
        assert_eq!(b_star(2, 0.5, &[3.0, -4.0]), 15.25);
    }
}
