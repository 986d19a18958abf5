use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqclass::data::{normalize_features, TabularDataset};
use seqclass::dwsc::{DwscModel, Featurization, RewardParams};
use seqclass::learner::{
    evaluate_actions, fit_policy, fit_policy_with_intercepts, sample_states, train, Behavior, DwscDomain, PolicyShape, RolloutConfig,
    RolloutDomain, RolloutSample, StateTag,
};
use seqclass::mdp::{place_block, ActionId, Mdp};
use seqclass::synthetic::{two_subspace, NUM_FEATURES};

fn random_samples(rng: &mut ChaCha8Rng, count: usize, shape: PolicyShape) -> Vec<RolloutSample<f64>> {
    (0..count)
        .map(|i| {
            let action = ActionId(i % shape.num_actions);
            let phi: Vec<f64> = (0..shape.block_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            RolloutSample {
                action,
                phi_sa: place_block(phi, action, shape.num_actions).unwrap(),
                estimated_return: rng.gen_range(-2.0..1.0),
                state_tag: StateTag { datum: i, effort: 0 },
            }
        })
        .collect()
}

/// Dense ridge solution over the whole weight vector.
fn normal_equations(samples: &[RolloutSample<f64>], dim: usize, ridge: f64) -> DVector<f64> {
    let phi = DMatrix::from_fn(samples.len(), dim, |r, c| samples[r].phi_sa.to_dense()[c]);
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.estimated_return));
    let gram = phi.transpose() * &phi + DMatrix::identity(dim, dim) * ridge;
    gram.cholesky().unwrap().solve(&(phi.transpose() * y))
}

#[test]
fn fit_matches_dense_normal_equations() {
    let shape = PolicyShape { theta_dim: 12, block_dim: 4, num_actions: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = random_samples(&mut rng, 50, shape);
    for ridge in [0.0, 1e-3, 0.5] {
        let fitted = fit_policy(&samples, shape, ridge).unwrap();
        let oracle = normal_equations(&samples, shape.theta_dim, ridge);
        let got = DVector::from_column_slice(fitted.theta());
        let rel = (&got - &oracle).norm() / oracle.norm();
        assert!(rel <= 1e-8, "ridge {ridge}: relative error {rel:e}");
    }
}

#[test]
fn intercept_fit_matches_augmented_oracle() {
    let shape = PolicyShape { theta_dim: 6, block_dim: 3, num_actions: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = random_samples(&mut rng, 60, shape);
    let fitted = fit_policy_with_intercepts(&samples, shape, 0.1).unwrap();
    for a in 0..2 {
        let mine: Vec<_> = samples.iter().filter(|s| s.action.0 == a).collect();
        let x = DMatrix::from_fn(mine.len(), 4, |r, c| if c < 3 { mine[r].phi_sa.block()[c] } else { 1.0 });
        let y = DVector::from_iterator(mine.len(), mine.iter().map(|s| s.estimated_return));
        let w = (x.transpose() * &x + DMatrix::identity(4, 4) * 0.1).cholesky().unwrap().solve(&(x.transpose() * y));
        for c in 0..3 {
            assert!((fitted.theta()[a * 3 + c] - w[c]).abs() <= 1e-9);
        }
        assert!((fitted.intercepts()[a] - w[3]).abs() <= 1e-9);
    }
}

fn synthetic(seed: u64) -> TabularDataset<f64> {
    normalize_features(&two_subspace(200, seed).unwrap()).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rollout_returns_are_bounded(seed in 0u64..1000, lambda in 0.0f64..0.5) {
        let data = synthetic(seed % 5);
        let model = DwscModel::new(NUM_FEATURES, 2, Featurization::Unconstrained, RewardParams::new(lambda).unwrap()).unwrap();
        let domain = DwscDomain::new(&model, &data).unwrap();
        let config = RolloutConfig { num_states: 5, seed, ..RolloutConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (index, state) in sample_states(&domain, &config, &mut rng).unwrap() {
            let samples = evaluate_actions(&domain, index, &state, &Behavior::Uniform, &config, &mut rng).unwrap();
            prop_assert_eq!(samples.len(), domain.episode(index).available_actions(&state).unwrap().len());
            for s in samples {
                let r = s.estimated_return;
                prop_assert!(r <= 1.0 + 1e-12 && r >= -1.0 - lambda * NUM_FEATURES as f64 - 1e-12, "return {}", r);
            }
        }
    }
}

#[test]
fn training_improves_on_the_random_policy() {
    for seed in 0..3 {
        let data = synthetic(seed);
        let model = DwscModel::new(NUM_FEATURES, 2, Featurization::Unconstrained, RewardParams::new(0.05).unwrap()).unwrap();
        let config = RolloutConfig { seed, ..RolloutConfig::default() };
        let out = train(&DwscDomain::new(&model, &data).unwrap(), &config).unwrap();
        let first = out.diagnostics.first().unwrap().mean_training_reward;
        let last = out.diagnostics.last().unwrap().mean_training_reward;
        assert!(last >= first - 1e-9, "seed {seed}: {first} -> {last}");
    }
}
