use coordiff_core::network::{
    analyze_network, build_combination_matrix, is_primitive, perron_residual, CombinationRule, Topology,
};
use coordiff_core::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn topology(n: usize, prob: f64, seed: u64) -> Topology {
    Topology::erdos_renyi(n, prob, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn combination_matrices_respect_neighborhoods(n in 1usize..16, prob in 0.15f64..1.0, seed: u64) {
        let t = topology(n, prob, seed);
        for rule in [CombinationRule::Averaging, CombinationRule::Metropolis] {
            let a = build_combination_matrix(&t, &rule).unwrap();
            for k in 0..n {
                let col: f64 = (0..n).map(|l| a[(l, k)]).sum();
                prop_assert!((col - 1.0).abs() <= 1e-12);
                for l in 0..n {
                    prop_assert!(a[(l, k)] >= 0.0);
                    if !t.neighbors(k).contains(&l) {
                        prop_assert_eq!(a[(l, k)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn metropolis_is_doubly_stochastic(n in 1usize..16, prob in 0.15f64..1.0, seed: u64) {
        let a = build_combination_matrix(&topology(n, prob, seed), &CombinationRule::Metropolis).unwrap();
        prop_assert_eq!(&a, &a.transpose());
        for l in 0..n {
            let row: f64 = a.row(l).iter().sum();
            prop_assert!((row - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn perron_vector_and_weights(
        n in 2usize..14,
        prob in 0.2f64..1.0,
        seed: u64,
        atc in any::<bool>(),
        mus in proptest::collection::vec(1e-4f64..0.05, 14),
    ) {
        let t = topology(n, prob, seed);
        let a2 = build_combination_matrix(&t, &CombinationRule::Averaging).unwrap();
        let a1 = if atc { DMatrix::identity(n, n) } else { build_combination_matrix(&t, &CombinationRule::Metropolis).unwrap() };
        let mu = &mus[..n];
        let an = analyze_network(&a1, &a2, mu, &vec![0.0; n]).unwrap();
        prop_assert!(is_primitive(&an.p_matrix));
        prop_assert!(perron_residual(&an.p_matrix, &an.perron) <= 1e-10);
        prop_assert!(an.perron.iter().all(|&v| v > 0.0));
        prop_assert!((an.perron.sum() - 1.0).abs() <= 1e-12);
        for k in 0..n {
            let mut expect = 0.0;
            for l in 0..n {
                expect += a2[(k, l)] * an.perron[l];
            }
            expect *= mu[k];
            prop_assert!((an.q[k] - expect).abs() <= 1e-14 * expect);
        }
    }
}
