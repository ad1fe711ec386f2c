use coordiff_core::linalg;
use coordiff_core::theory::{
    alpha_theta, complexity, comparison_diagnostics, er_theory, msd_theory, rates, two_agent_gap,
    two_agent_in_region, two_agent_inputs, DiagnosticsContext, Regime, TheoryInputs, TwoAgentRegime,
};
use coordiff_core::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(m: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, cols, |_, _| rng.sample(StandardNormal))
}

/// Symmetric matrix with eigenvalues drawn from `[lo, hi]`.
fn spectrum_matrix(m: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let u = gaussian(m, m, rng).qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| rng.random_range(lo..=hi)));
    linalg::symmetrize(&(&u * d * u.transpose()))
}

fn random_psd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = gaussian(m, m + 1, rng);
    linalg::symmetrize(&(&b * b.transpose()))
}

struct Instance {
    inputs: TheoryInputs,
    nu: f64,
    delta: f64,
}

fn instance(seed: u64, n: usize, m: usize, uniform_r: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = rng.random_range(0.1..1.0);
    let delta = nu * rng.random_range(1.0..10.0);
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1e-2)).collect();
    let r0 = rng.random_range(0.0..0.95);
    let r: Vec<f64> = (0..n).map(|_| if uniform_r { r0 } else { rng.random_range(0.0..0.95) }).collect();
    let hessians = (0..n).map(|_| spectrum_matrix(m, nu, delta, &mut rng)).collect();
    let noise = (0..n).map(|_| random_psd(m, &mut rng)).collect();
    let inputs = TheoryInputs::new(q, r, hessians, noise).unwrap().with_bounds(nu, delta).unwrap();
    Instance { inputs, nu, delta }
}

fn pi_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![-0.99f64..-0.01, 0.01f64..0.99]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn two_agent_closed_form_matches_general(
        pi1 in pi_strategy(),
        pi2 in pi_strategy(),
        s1 in 1e-4f64..1.0,
        s2 in 1e-4f64..1.0,
        q in 1e-4f64..1e-2,
        r in 0.0f64..0.95,
    ) {
        let closed = two_agent_gap(pi1, pi2, s1, s2, q, r).unwrap();
        let general = msd_theory(&two_agent_inputs(pi1, pi2, s1, s2, q, r).unwrap()).unwrap();
        let scale = general.coor.abs().max(general.grad.abs());
        prop_assert!((closed.gap - general.gap).abs() <= 1e-10 * scale,
            "closed {} general {}", closed.gap, general.gap);
        if r > 0.0 && closed.gap.abs() > 1e-9 * scale {
            prop_assert_eq!(closed.regime == TwoAgentRegime::CoordinateBetter, general.gap < 0.0);
        }
        if s1 > s2 {
            prop_assert_eq!(
                two_agent_in_region(pi1, pi2, s1, s2).unwrap(),
                closed.regime == TwoAgentRegime::CoordinateBetter
            );
        }
    }

    #[test]
    fn lyapunov_solution_is_spd(seed: u64, n in 1usize..6, m in 1usize..6) {
        let inst = instance(seed, n, m, false);
        let er = er_theory(&inst.inputs).unwrap();
        prop_assert!(er.residual <= 1e-10, "residual {}", er.residual);
        prop_assert_eq!(linalg::asymmetry(&er.x), 0.0);
        prop_assert!(linalg::min_eigenvalue(&er.x) > 0.0);
    }

    #[test]
    fn upper_bound_is_sound(seed: u64, n in 1usize..6, m in 1usize..6) {
        let inst = instance(seed, n, m, true);
        let msd = msd_theory(&inst.inputs).unwrap();
        let r = inst.inputs.uniform_r().unwrap();
        let q_sum: f64 = inst.inputs.q().iter().sum();
        let weighted: f64 = inst.inputs.q().iter().zip(inst.inputs.noise()).map(|(q, g)| q * q * g.trace()).sum();
        let bound = 0.5 * r / q_sum * (1.0 / inst.nu - 1.0 / inst.delta) * weighted;
        prop_assert!(msd.gap.abs() <= bound * (1.0 + 1e-9) + 1e-18);
        let closed = msd.gap_closed_form.unwrap();
        prop_assert!((closed - (msd.coor - msd.grad)).abs() <= 1e-12 * msd.coor.max(msd.grad) + 1e-300);
        let diag = comparison_diagnostics(&inst.inputs, &DiagnosticsContext::default()).unwrap();
        prop_assert!(diag.all_hold(), "{:?}", diag.checks);
    }

    #[test]
    fn mse_uniform_covariance_bound(seed: u64, n in 1usize..6, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r_u = spectrum_matrix(m, 0.05, 2.0, &mut rng);
        let sigma2: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1.0)).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1e-2)).collect();
        let r = rng.random_range(0.0..0.95);
        let inputs = TheoryInputs::new(
            q.clone(),
            vec![r; n],
            vec![&r_u * 2.0; n],
            sigma2.iter().map(|s| &r_u * (4.0 * s)).collect(),
        ).unwrap();
        let msd = msd_theory(&inputs).unwrap();
        let q_sum: f64 = q.iter().sum();
        let weighted: f64 = q.iter().zip(&sigma2).map(|(q, s)| q * q * s).sum();
        let bound = r / q_sum * weighted * (inputs.delta() / inputs.nu() - 1.0) * m as f64;
        let slack = 1e-9 * msd.coor;
        prop_assert!(msd.gap >= -slack);
        prop_assert!(msd.gap <= bound + slack);
        let ctx = DiagnosticsContext { mse_noise_variances: Some(sigma2), ..Default::default() };
        prop_assert!(comparison_diagnostics(&inputs, &ctx).unwrap().all_hold());
    }

    #[test]
    fn rates_are_ordered_and_monotone(seed: u64, n in 1usize..6, m in 1usize..5, agent in 0usize..6, bump in 0.0f64..0.5) {
        let inst = instance(seed, n, m, false);
        let base = rates(&inst.inputs).unwrap();
        prop_assert!(base.alpha_coor >= base.alpha_grad);
        prop_assert!(base.time_ratio >= 1.0 - 1e-12);
        let k = agent % n;
        let mut r = inst.inputs.r().to_vec();
        r[k] = (r[k] + bump).min(0.99);
        let less_kept = rates(&inst.inputs.with_r(r).unwrap()).unwrap();
        prop_assert!(less_kept.alpha_coor >= base.alpha_coor - 1e-15);
    }

    #[test]
    fn uniform_r_leaves_er_unchanged(seed: u64, n in 1usize..6, m in 1usize..6) {
        let inst = instance(seed, n, m, true);
        let er = er_theory(&inst.inputs).unwrap();
        prop_assert!((er.coor - er.grad).abs() <= 1e-12 * er.grad);
    }

    #[test]
    fn msd_scales_with_q(seed: u64, n in 1usize..6, m in 1usize..5, c in 0.1f64..10.0) {
        let inst = instance(seed, n, m, false);
        let base = msd_theory(&inst.inputs).unwrap();
        let scaled = msd_theory(&inst.inputs.scaled(c).unwrap()).unwrap();
        prop_assert!((scaled.coor - c * base.coor).abs() <= 1e-12 * c * base.coor);
        prop_assert!((scaled.grad - c * base.grad).abs() <= 1e-12 * c * base.grad);
    }

    #[test]
    fn uniform_cost_regimes(seed: u64, n in 1usize..7, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = spectrum_matrix(m, 0.2, rng.random_range(0.3..3.0), &mut rng);
        let g = random_psd(m, &mut rng);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1e-2)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.95)).collect();
        let inputs = TheoryInputs::new(q.clone(), r.clone(), vec![h; n], vec![g.clone(); n]).unwrap();
        let diag = comparison_diagnostics(&inputs, &DiagnosticsContext::default()).unwrap();
        prop_assert!(diag.uniform_costs);
        let (alpha, theta) = alpha_theta(&q, &r);
        prop_assert!(alpha <= theta + 1e-15);
        prop_assert!(diag.all_hold(), "{:?} {:?}", diag.regime, diag.checks);
        let er = er_theory(&inputs).unwrap();
        prop_assert!((er.gap - 0.25 * theta * g.trace()).abs() <= 1e-9 * er.coor);
        if diag.regime == Some(Regime::C) {
            prop_assert!(msd_theory(&inputs).unwrap().gap <= 1e-9 * er.coor);
        }
    }

    #[test]
    fn complexity_ratio_at_least_one(c_m in 0u32..1000, c_a in 0u32..1000, n_k in 1u32..50, m in 1u32..100, r in 0.0f64..0.99) {
        let c = complexity(c_m, c_a, n_k, m, r).unwrap();
        prop_assert!(c.mult_total_ratio >= 1.0 - 1e-12);
        prop_assert!(c.add_total_ratio >= 1.0 - 1e-12);
        prop_assert!(c.mult_coor <= c.mult_grad);
    }
}
