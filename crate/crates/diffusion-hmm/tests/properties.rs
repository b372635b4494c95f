//! Property-based invariant suites for the filtering library.

mod common;

use proptest::prelude::*;

use diffusion_hmm::analysis::estimate_error_prob;
use diffusion_hmm::analysis::Scenario;
use diffusion_hmm::filters::Algorithm;
use diffusion_hmm::likelihood::{LikelihoodModel, NetworkLikelihoods};
use diffusion_hmm::markov::TransitionModel;
use diffusion_hmm::network::{metropolis_weights, CombinationMatrix, Graph};

fn simplex(h: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1e-6..1.0f64, h).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

fn transition2() -> impl Strategy<Value = TransitionModel> {
    (0.01..0.99f64, 0.01..0.99f64).prop_map(|(a, b)| {
        TransitionModel::from_row_stochastic(vec![vec![1.0 - a, a], vec![b, 1.0 - b]])
            .unwrap()
    })
}

fn ring_combine(k: usize) -> CombinationMatrix {
    metropolis_weights(&Graph::ring(k).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dhs_step_preserves_simplex(
        transition in transition2(),
        priors in proptest::collection::vec(simplex(2), 4),
        observations in proptest::collection::vec(-5.0..5.0f64, 4),
        gamma in 0.1..20.0f64,
    ) {
        let combine = ring_combine(4);
        common::check_simplex_preservation(
            &transition, &combine, &priors, &observations, gamma,
        ).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn markov_step_is_a_strong_data_processor(
        transition in transition2(),
        mu in simplex(2),
        nu in simplex(2),
    ) {
        common::check_sdpi(&transition, &mu, &nu).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn pinsker_inequality_holds(p in simplex(5), q in simplex(5)) {
        common::check_pinsker(&p, &q).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn covariance_factorization_is_exact(
        sigma in proptest::collection::vec(0.01..10.0f64, 5),
        extra_edges in proptest::collection::vec((0usize..5, 0usize..5), 0..5),
    ) {
        let mut graph = Graph::ring(5).unwrap();
        for (u, v) in extra_edges {
            graph.add_edge(u, v).unwrap();
        }
        let combine = metropolis_weights(&graph).unwrap();
        common::check_lowrank_factorization(&combine, &sigma)
            .map_err(TestCaseError::fail)?;
    }

    #[test]
    fn belief_normalization_is_scale_invariant(
        weights in proptest::collection::vec(1e-6..1.0f64, 2..8),
        scale in 1e-6..1e6f64,
    ) {
        common::check_scaling_invariance(&weights, scale)
            .map_err(TestCaseError::fail)?;
    }

    #[test]
    fn error_estimates_are_seed_deterministic(seed in 0u64..1000) {
        let scenario = Scenario::uniform_priors(
            TransitionModel::bsc(0.1).unwrap(),
            NetworkLikelihoods::homogeneous(
                LikelihoodModel::gaussian(vec![-1.0, 1.0], 1.0).unwrap(), 3,
            ).unwrap(),
            ring_combine(3),
        ).unwrap();
        let algorithm = Algorithm::Dhs { gamma: 3.0 };
        let a = estimate_error_prob(&scenario, algorithm, 20, 10, seed).unwrap();
        let b = estimate_error_prob(&scenario, algorithm, 20, 10, seed).unwrap();
        prop_assert_eq!(a.counts, b.counts);
    }
}
