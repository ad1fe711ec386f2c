use coordiff_core::diffusion::{
    error_recursion_reference, run_trajectory, sample_mask, substream, DiffusionError, DiffusionProblem,
    DiffusionState, Masking, StepTrace, StreamKind,
};
use coordiff_core::linalg;
use coordiff_core::network::{analyze_network, build_combination_matrix, CombinationRule, Topology};
use coordiff_core::risks::{MseAgentModel, RiskModel};
use coordiff_core::DMatrix;

fn three_agent_problem(sigma: f64, r: [f64; 3], a1_metropolis: bool) -> DiffusionProblem {
    let t = Topology::path(3).unwrap();
    let a2 = build_combination_matrix(&t, &CombinationRule::Averaging).unwrap();
    let a1 = if a1_metropolis {
        build_combination_matrix(&t, &CombinationRule::Metropolis).unwrap()
    } else {
        DMatrix::identity(3, 3)
    };
    let an = analyze_network(&a1, &a2, &[0.03, 0.02, 0.04], &r).unwrap();
    let w = vec![0.4, -0.3, 0.9];
    let models = [0.2, -0.5, 0.7]
        .iter()
        .map(|&pi| RiskModel::Mse(MseAgentModel::ar1(w.clone(), pi, sigma).unwrap()))
        .collect();
    DiffusionProblem::new(an, models).unwrap()
}

#[test]
fn mask_frequency_matches_probability() {
    let mut rng = substream(2024, 0, 0, StreamKind::Mask);
    let draws = 100_000;
    let m = 4;
    let mut ones = vec![0usize; m];
    for _ in 0..draws {
        let mask = sample_mask(0.5, m, &mut rng).unwrap();
        for (c, &b) in ones.iter_mut().zip(mask.indicator()) {
            *c += b as usize;
        }
    }
    let band = 3.0 * (0.25 / draws as f64).sqrt();
    for c in ones {
        assert!((c as f64 / draws as f64 - 0.5).abs() <= band);
    }
}

#[test]
fn noiseless_network_converges_exactly() {
    for masking in [Masking::Coordinate, Masking::FullGradient] {
        let problem = three_agent_problem(0.0, [0.3, 0.6, 0.1], true);
        let traj = run_trajectory(&problem, masking, 6000, 7, 0).unwrap();
        let last = traj.squared(traj.len() - 1);
        assert!(last.iter().all(|&e| e <= 1e-20), "{last:?}");
    }
}

#[test]
fn zero_probability_reproduces_full_gradient() {
    let problem = three_agent_problem(0.1, [0.0; 3], true);
    let coor = run_trajectory(&problem, Masking::Coordinate, 500, 99, 3).unwrap();
    let grad = run_trajectory(&problem, Masking::FullGradient, 500, 99, 3).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&coor.squared_error), bits(&grad.squared_error));
    assert_eq!(bits(&coor.weighted_error), bits(&grad.weighted_error));
}

#[test]
fn engine_follows_error_recursion() {
    for a1_metropolis in [false, true] {
        let problem = three_agent_problem(0.05, [0.5, 0.2, 0.8], a1_metropolis);
        let mut state = DiffusionState::new(&problem, Masking::Coordinate, 31, 0);
        let mut trace = StepTrace::default();
        let mut predicted = state.error_vector(&problem);
        for step in 0..100 {
            let prev = state.error_vector(&problem);
            state.step_traced(&problem, &mut trace).unwrap();
            let noise = trace.noise.as_ref().unwrap();
            let actual = state.error_vector(&problem);
            let one_step = error_recursion_reference(&problem, &prev, &trace.masks, noise).unwrap();
            predicted = error_recursion_reference(&problem, &predicted, &trace.masks, noise).unwrap();
            let scale = linalg::sq_norm(&actual).sqrt();
            for (label, p) in [("one-step", &one_step), ("chained", &predicted)] {
                let diff: Vec<f64> = p.iter().zip(&actual).map(|(a, b)| a - b).collect();
                let rel = linalg::sq_norm(&diff).sqrt() / scale;
                assert!(rel <= 1e-10, "{label} step {step}: relative error {rel}");
            }
        }
    }
}

#[test]
fn iteration_counter_increments() {
    let problem = three_agent_problem(0.05, [0.5, 0.2, 0.8], false);
    let mut state = DiffusionState::new(&problem, Masking::Coordinate, 1, 0);
    for i in 0..10 {
        assert_eq!(state.iteration(), i);
        state.step(&problem).unwrap();
    }
}

#[test]
fn large_step_sizes_diverge_loudly() {
    let t = Topology::complete(2).unwrap();
    let a2 = build_combination_matrix(&t, &CombinationRule::Metropolis).unwrap();
    let an = analyze_network(&DMatrix::identity(2, 2), &a2, &[3.0, 3.0], &[0.2, 0.2]).unwrap();
    let model = RiskModel::Mse(MseAgentModel::ar1(vec![1.0, 1.0], 0.5, 0.1).unwrap());
    let problem = DiffusionProblem::new(an, vec![model.clone(), model]).unwrap();
    match run_trajectory(&problem, Masking::Coordinate, 10_000, 0, 0) {
        Err(DiffusionError::Diverged { iteration, .. }) => assert!(iteration < 10_000),
        other => panic!("expected divergence, got {other:?}"),
    }
}
