use super::*;
use crate::rng::{stream, Purpose};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn singletons(n: usize) -> Arc<BlockPartition> {
    Arc::new(BlockPartition::singletons(n).unwrap())
}

fn opt(cfg: OptimizerConfig, n: usize) -> Optimizer {
    Optimizer::new(cfg, singletons(n)).unwrap()
}

#[test]
fn bcos_g_without_memory_is_a_sign_step() {
    let cfg = OptimizerConfig::new(Algorithm::BcosG)
        .with_betas(0.0, 0.0)
        .with_epsilon(0.0);
    let mut o = opt(cfg, 2);
    let mut x = vec![0.0, 0.0];
    o.step_slice(&mut x, &[4.0, -9.0], 0.1).unwrap();
    assert_eq!(x, vec![-0.1, 0.1]);
}

#[test]
fn bcos_c_hand_example() {
    let cfg = OptimizerConfig::new(Algorithm::BcosC)
        .with_betas(0.9, 0.0)
        .with_epsilon(0.0);
    let state = OptimizerState {
        m: Some(vec![1.0]),
        v: None,
        t: 5,
        initialized: true,
    };
    let mut o = Optimizer::with_state(cfg, singletons(1), state).unwrap();
    let mut x = vec![0.0];
    o.step_slice(&mut x, &[0.0], 1.0).unwrap();
    let m = o.state().m.as_ref().unwrap()[0];
    assert!((m - 0.9).abs() < 1e-15);
    assert!((x[0] + 0.9 / 0.99f64.sqrt()).abs() < 1e-15);
    assert!(o.state().v.is_none());
}

/// Line-by-line restatement of the conditional-estimator algorithm with
/// explicit loops, used as an independent reference.
fn bcos_c_reference(x: &mut [f64], m: &mut [f64], g: &[f64], beta: f64, alpha: f64, eps: f64) {
    let m_prev = m.to_vec();
    for i in 0..x.len() {
        m[i] = beta * m_prev[i] + (1.0 - beta) * g[i];
        let v =
            (1.0 - (1.0 - beta).powi(2)) * m_prev[i].powi(2) + (1.0 - beta).powi(2) * g[i].powi(2);
        x[i] -= alpha * m[i] / (v.sqrt() + eps);
    }
}

#[test]
fn bcos_c_matches_reference_over_many_steps() {
    let n = 5;
    let (beta, alpha, eps) = (0.9, 0.05, 1e-8);
    let cfg = OptimizerConfig::new(Algorithm::BcosC)
        .with_betas(beta, 0.0)
        .with_epsilon(eps);
    let mut o = opt(cfg, n);
    let mut rng = stream(3, 0, Purpose::Gradient);
    let mut x = vec![1.0; n];
    let mut x_ref = x.clone();
    let mut m_ref: Option<Vec<f64>> = None;
    for _ in 0..200 {
        let g: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = m_ref.get_or_insert_with(|| g.clone());
        bcos_c_reference(&mut x_ref, m, &g, beta, alpha, eps);
        o.step_slice(&mut x, &g, alpha).unwrap();
    }
    for (a, b) in x.iter().zip(&x_ref) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn decoupled_decay_only_update() {
    let cfg = OptimizerConfig::new(Algorithm::BcosC)
        .with_epsilon(1e-8)
        .with_weight_decay(0.1, true)
        .with_bias_correction(BiasCorrection::ZeroInitRescale);
    let mut o = opt(cfg, 3);
    let mut x = vec![1.0, -2.0, 4.0];
    o.step_slice(&mut x, &[0.0; 3], 0.5).unwrap();
    for (a, b) in x.iter().zip([0.95, -1.9, 3.8]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn decoupled_decay_too_large_is_rejected_without_mutation() {
    let cfg = OptimizerConfig::new(Algorithm::BcosG).with_weight_decay(0.5, true);
    let mut o = opt(cfg, 1);
    let mut x = vec![1.0];
    assert!(matches!(
        o.step_slice(&mut x, &[1.0], 2.0),
        Err(Error::DecayTooLarge(_))
    ));
    assert_eq!(x, vec![1.0]);
    assert!(!o.state().initialized);
}

#[test]
fn non_finite_and_shape_errors() {
    let mut o = opt(OptimizerConfig::new(Algorithm::Adam), 2);
    let mut x = vec![0.0, 0.0];
    assert!(matches!(
        o.step_slice(&mut x, &[f64::NAN, 0.0], 0.1),
        Err(Error::NonFinite { index: 0, .. })
    ));
    assert!(matches!(
        o.step_slice(&mut x, &[1.0], 0.1),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn coupled_decay_folds_into_gradient() {
    let lambda = 0.3;
    let cfg = OptimizerConfig::new(Algorithm::Sgd).with_weight_decay(lambda, false);
    let mut o = opt(cfg, 2);
    let mut x = vec![2.0, -1.0];
    o.step_slice(&mut x, &[0.5, 0.5], 0.1).unwrap();
    assert_eq!(
        x,
        vec![
            2.0 - 0.1 * (0.5 + lambda * 2.0),
            -1.0 - 0.1 * (0.5 - lambda)
        ]
    );
}

#[test]
fn stored_state_sizes() {
    let p = BlockPartition::singletons(4).unwrap();
    let size = |a| OptimizerState::new(a, &p).stored_vectors();
    assert_eq!(size(Algorithm::BcosC), 1);
    assert_eq!(size(Algorithm::BcosM), 2);
    assert_eq!(size(Algorithm::Adam), 2);
    assert_eq!(size(Algorithm::BcosG), 1);
    assert_eq!(size(Algorithm::Sgd), 0);
    assert_eq!(OptimizerState::new(Algorithm::BcosC, &p).stored_values(), 4);
}

#[test]
fn first_bcos_g_step_is_a_sign_step() {
    let cfg = OptimizerConfig::new(Algorithm::BcosG)
        .with_betas(0.9, 0.0)
        .with_epsilon(0.0);
    let mut o = opt(cfg, 3);
    let mut x = vec![0.0; 3];
    o.step_slice(&mut x, &[3.0, -0.25, 0.0], 0.2).unwrap();
    assert_eq!(x, vec![-0.2, 0.2, 0.0]);

    let cfg = cfg.with_epsilon(1e-12);
    let mut o = opt(cfg, 1);
    let mut x = vec![0.0];
    o.step_slice(&mut x, &[3.0], 0.2).unwrap();
    assert!((x[0] + 0.2).abs() < 1e-12);
}

#[test]
fn zero_init_rescale_first_adam_step_is_a_sign_step() {
    let cfg = OptimizerConfig::new(Algorithm::Adam)
        .with_epsilon(0.0)
        .with_bias_correction(BiasCorrection::ZeroInitRescale);
    let mut o = opt(cfg, 2);
    let mut x = vec![0.0; 2];
    o.step_slice(&mut x, &[5.0, -0.5], 0.1).unwrap();
    for (a, b) in x.iter().zip([-0.1, 0.1]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn full_block_uses_block_norm() {
    let p = Arc::new(BlockPartition::full(2).unwrap());
    let cfg = OptimizerConfig::new(Algorithm::BcosG)
        .with_betas(0.0, 0.0)
        .with_epsilon(0.0);
    let mut o = Optimizer::new(cfg, p).unwrap();
    let mut x = vec![0.0, 0.0];
    o.step_slice(&mut x, &[3.0, 4.0], 1.0).unwrap();
    assert_eq!(x, vec![-0.6, -0.8]);
    assert_eq!(o.state().v.as_deref(), Some(&[25.0][..]));
}

#[test]
fn epsilon_placements_differ_as_expected() {
    let mk = |placement| {
        let mut cfg = OptimizerConfig::new(Algorithm::BcosG)
            .with_betas(0.0, 0.0)
            .with_epsilon(0.5);
        cfg.epsilon_placement = placement;
        let mut o = opt(cfg, 1);
        let mut x = vec![0.0];
        o.step_slice(&mut x, &[2.0], 1.0).unwrap();
        x[0]
    };
    assert_eq!(mk(EpsilonPlacement::OutsideSqrt), -2.0 / 2.5);
    assert_eq!(mk(EpsilonPlacement::InsideSqrt), -2.0 / 4.5f64.sqrt());
}

#[test]
fn no_sqrt_diagnostic_divides_by_v() {
    let mut cfg = OptimizerConfig::new(Algorithm::BcosG)
        .with_betas(0.0, 0.0)
        .with_epsilon(0.0);
    cfg.no_sqrt_diagnostic = true;
    let mut o = opt(cfg, 1);
    let mut x = vec![0.0];
    o.step_slice(&mut x, &[2.0], 1.0).unwrap();
    assert_eq!(x, vec![-0.5]);
}

#[test]
fn conceptual_algorithm_needs_oracle() {
    let mut o = opt(OptimizerConfig::new(Algorithm::ConceptualBcos), 1);
    assert!(o.step_slice(&mut [0.0], &[1.0], 0.1).is_err());
}

#[test]
fn config_validation() {
    assert!(OptimizerConfig::new(Algorithm::Adam)
        .with_betas(1.0, 0.9)
        .validate()
        .is_err());
    assert!(OptimizerConfig::new(Algorithm::Adam)
        .with_betas(0.9, -0.1)
        .validate()
        .is_err());
    assert!(OptimizerConfig::new(Algorithm::Adam)
        .with_epsilon(-1.0)
        .validate()
        .is_err());
    let mut c = OptimizerConfig::new(Algorithm::BcosG);
    c.conditional_full = true;
    assert!(c.validate().is_err());
    assert_eq!("bcos_c".parse::<Algorithm>().unwrap(), Algorithm::BcosC);
    assert!("lion".parse::<Algorithm>().is_err());
}

#[test]
fn advance_is_pure() {
    let cfg = OptimizerConfig::new(Algorithm::BcosM);
    let p = BlockPartition::singletons(2).unwrap();
    let s = OptimizerState::new(cfg.algorithm, &p);
    let a = advance(&cfg, &p, &s, &[1.0, 2.0]).unwrap();
    let b = advance(&cfg, &p, &s, &[1.0, 2.0]).unwrap();
    assert_eq!(a.next, b.next);
    assert_eq!(a.direction, b.direction);
    assert!(!s.initialized);
}

proptest! {
    #[test]
    fn bcos_c_estimate_is_nonnegative(
        beta in 0.0f64..0.999,
        mp in prop::collection::vec(-1e3f64..1e3, 1..6),
        seed in any::<u64>(),
        full in any::<bool>(),
    ) {
        let n = mp.len();
        let mut cfg = OptimizerConfig::new(Algorithm::BcosC).with_betas(beta, 0.0);
        cfg.conditional_full = full;
        let p = BlockPartition::singletons(n).unwrap();
        let state = OptimizerState { m: Some(mp.clone()), v: None, t: 1, initialized: true };
        let mut rng = stream(seed, 0, Purpose::Gradient);
        let g: Vec<f64> = (0..n).map(|_| 100.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let adv = advance(&cfg, &p, &state, &g).unwrap();
        let est = adv.estimate.unwrap();
        for (i, v) in est.iter().enumerate() {
            prop_assert!(*v >= 0.0);
            if !full && *v == 0.0 {
                prop_assert!(mp[i] == 0.0 && g[i] == 0.0);
            }
        }
    }

    #[test]
    fn stored_estimates_stay_nonnegative(alg_idx in 0usize..3, seed in any::<u64>()) {
        let alg = [Algorithm::BcosG, Algorithm::BcosM, Algorithm::Adam][alg_idx];
        let mut o = opt(OptimizerConfig::new(alg), 3);
        let mut rng = stream(seed, 0, Purpose::Gradient);
        let mut x = vec![0.0; 3];
        for _ in 0..20 {
            let g: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            o.step_slice(&mut x, &g, 0.01).unwrap();
            prop_assert!(o.state().v.as_ref().unwrap().iter().all(|v| *v >= 0.0));
        }
    }
}
