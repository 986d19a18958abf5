//! Deterministic finite-horizon MDP engine shared by the feature-acquisition
//! and text-reading processes.
//!
//! Every state-action pair is embedded with the block-vector layout: the
//! per-state representation `phi` is written into a slot of a long vector
//! whose position depends on the action, so a single weight vector holds one
//! scoring function per action. Because exactly one block is ever nonzero,
//! [`Featurized`] keeps only that block and its offset.

use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, Scalar};

/// Index of an action in the problem's fixed global enumeration.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A block-vector state-action embedding stored as its single nonzero block.
#[derive(Clone, Debug, PartialEq)]
pub struct Featurized<F> {
    offset: usize,
    block: Vec<F>,
    dim: usize,
}

impl<F: Scalar> Featurized<F> {
    pub fn new(offset: usize, block: Vec<F>, dim: usize) -> Result<Self> {
        if offset + block.len() > dim {
            return Err(Error::dim(dim, offset + block.len()));
        }
        Ok(Featurized { offset, block, dim })
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn block(&self) -> &[F] {
        &self.block
    }

    /// Length of the full embedding.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        out[self.offset..self.offset + self.block.len()].copy_from_slice(&self.block);
        out
    }

    /// Inner product with a full-length weight vector.
    pub fn dot(&self, theta: &[F]) -> Result<F> {
        if theta.len() != self.dim {
            return Err(Error::dim(self.dim, theta.len()));
        }
        Ok(dot(&theta[self.offset..self.offset + self.block.len()], &self.block))
    }
}

/// Places `phi` at offset `action * len(phi)` of a zero vector of length
/// `len(phi) * num_actions`.
pub fn block_vector<F: Scalar>(phi: &[F], action: ActionId, num_actions: usize) -> Result<Vec<F>> {
    Ok(place_block(phi.to_vec(), action, num_actions)?.to_dense())
}

/// Sparse form of [`block_vector`].
pub fn place_block<F: Scalar>(phi: Vec<F>, action: ActionId, num_actions: usize) -> Result<Featurized<F>> {
    if action.0 >= num_actions {
        return Err(Error::InvalidAction(format!("action index {} out of range for {} actions", action.0, num_actions)));
    }
    if phi.is_empty() {
        return Err(Error::InvalidArgument("empty state representation".into()));
    }
    let m = phi.len();
    Featurized::new(action.0 * m, phi, m * num_actions)
}

/// Weight vector of a linear action-value function.
///
/// The value of action `a` in state `s` is `<theta, Phi(s, a)> + intercepts[a]`.
/// `block_dim` is the length of the per-state representation `phi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy<F> {
    theta: Vec<F>,
    intercepts: Vec<F>,
    block_dim: usize,
    num_actions: usize,
}

impl<F: Scalar> LinearPolicy<F> {
    pub fn zeros(theta_dim: usize, block_dim: usize, num_actions: usize) -> Self {
        LinearPolicy { theta: vec![F::zero(); theta_dim], intercepts: vec![F::zero(); num_actions], block_dim, num_actions }
    }

    pub fn new(theta: Vec<F>, block_dim: usize, num_actions: usize) -> Result<Self> {
        Self::with_intercepts(theta, vec![F::zero(); num_actions], block_dim, num_actions)
    }

    pub fn with_intercepts(theta: Vec<F>, intercepts: Vec<F>, block_dim: usize, num_actions: usize) -> Result<Self> {
        if num_actions == 0 || block_dim == 0 {
            return Err(Error::InvalidArgument("policy needs at least one action and a non-empty block".into()));
        }
        if intercepts.len() != num_actions {
            return Err(Error::dim(num_actions, intercepts.len()));
        }
        if !all_finite(&theta) || !all_finite(&intercepts) {
            return Err(Error::NumericalFailure("policy weights must be finite".into()));
        }
        Ok(LinearPolicy { theta, intercepts, block_dim, num_actions })
    }

    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn intercepts(&self) -> &[F] {
        &self.intercepts
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn theta_dim(&self) -> usize {
        self.theta.len()
    }

    pub fn action_value(&self, action: ActionId, phi_sa: &Featurized<F>) -> Result<F> {
        let bias = *self
            .intercepts
            .get(action.0)
            .ok_or_else(|| Error::InvalidAction(format!("action index {} out of range for {} actions", action.0, self.num_actions)))?;
        Ok(phi_sa.dot(&self.theta)? + bias)
    }
}

/// Inner product of the policy weights with a dense state-action vector.
pub fn score<F: Scalar>(policy: &LinearPolicy<F>, phi_sa: &[F]) -> Result<F> {
    if phi_sa.len() != policy.theta.len() {
        return Err(Error::dim(policy.theta.len(), phi_sa.len()));
    }
    Ok(dot(&policy.theta, phi_sa))
}

/// Highest-valued action; equal values resolve to the smallest index.
pub fn greedy_action<F: Scalar>(policy: &LinearPolicy<F>, featurized_actions: &[(ActionId, Featurized<F>)]) -> Result<ActionId> {
    let mut best: Option<(ActionId, F)> = None;
    for (id, phi) in featurized_actions {
        let v = policy.action_value(*id, phi)?;
        best = match best {
            Some((bid, bv)) if bv > v || (bv == v && bid < *id) => Some((bid, bv)),
            _ => Some((*id, v)),
        };
    }
    best.map(|(id, _)| id).ok_or(Error::TerminalState)
}

/// A deterministic finite-horizon decision process with a block-vector
/// state-action embedding.
pub trait Mdp<F: Scalar> {
    type State: Clone + Debug + Send + Sync;
    type Action: Copy + Debug + Eq;

    fn num_actions(&self) -> usize;

    /// Length of the full state-action embedding.
    fn theta_dim(&self) -> usize;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Actions in ascending [`ActionId`] order. Errors on terminal states.
    fn available_actions(&self, state: &Self::State) -> Result<Vec<Self::Action>>;

    fn action_id(&self, action: Self::Action) -> ActionId;

    fn transition(&self, state: &Self::State, action: Self::Action) -> Result<Self::State>;

    fn reward(&self, state: &Self::State, action: Self::Action) -> Result<F>;

    fn featurize(&self, state: &Self::State, action: Self::Action) -> Result<Featurized<F>>;

    /// Problem-specific effort measure of a state: features acquired or
    /// sentences read.
    fn effort(&self, state: &Self::State) -> usize;
}

/// Chooses an action among featurized candidates. Used to inject behavior
/// policies into [`run_episode`].
pub trait ActionSelector<F: Scalar> {
    fn select(&mut self, candidates: &[(ActionId, Featurized<F>)]) -> Result<ActionId>;
}

/// Greedy selection with respect to a fixed policy.
pub struct Greedy<'p, F>(pub &'p LinearPolicy<F>);

impl<F: Scalar> ActionSelector<F> for Greedy<'_, F> {
    fn select(&mut self, candidates: &[(ActionId, Featurized<F>)]) -> Result<ActionId> {
        greedy_action(self.0, candidates)
    }
}

/// Uniformly random selection over the available actions.
pub struct UniformRandom<R>(pub R);

impl<F: Scalar, R: Rng> ActionSelector<F> for UniformRandom<R> {
    fn select(&mut self, candidates: &[(ActionId, Featurized<F>)]) -> Result<ActionId> {
        if candidates.is_empty() {
            return Err(Error::TerminalState);
        }
        Ok(candidates[self.0.gen_range(0..candidates.len())].0)
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeTrace<F, S> {
    pub actions: Vec<ActionId>,
    pub rewards: Vec<F>,
    pub cumulative_reward: F,
    pub final_state: S,
    /// Set when the horizon cap was hit before a terminal state.
    pub truncated: bool,
}

/// An available action with its id and embedding.
pub type FeaturizedAction<A, F> = (A, ActionId, Featurized<F>);

/// Featurizes every available action of a non-terminal state.
pub fn featurize_available<F: Scalar, M: Mdp<F>>(mdp: &M, state: &M::State) -> Result<Vec<FeaturizedAction<M::Action, F>>> {
    mdp.available_actions(state)?.into_iter().map(|a| Ok((a, mdp.action_id(a), mdp.featurize(state, a)?))).collect()
}

/// Runs the process from `start` until a terminal state or `horizon_cap`
/// steps. Actions are greedy in `policy` unless a selector is supplied.
pub fn run_episode<F: Scalar, M: Mdp<F>>(
    mdp: &M,
    policy: &LinearPolicy<F>,
    start: M::State,
    horizon_cap: usize,
    selector: Option<&mut dyn ActionSelector<F>>,
) -> Result<EpisodeTrace<F, M::State>> {
    if horizon_cap == 0 {
        return Err(Error::InvalidArgument("horizon cap must be at least 1".into()));
    }
    let mut greedy = Greedy(policy);
    let selector: &mut dyn ActionSelector<F> = match selector {
        Some(s) => s,
        None => &mut greedy,
    };

    let mut state = start;
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut cumulative = F::zero();
    while !mdp.is_terminal(&state) {
        if actions.len() == horizon_cap {
            return Ok(EpisodeTrace { actions, rewards, cumulative_reward: cumulative, final_state: state, truncated: true });
        }
        let options = featurize_available(mdp, &state)?;
        let candidates: Vec<(ActionId, Featurized<F>)> = options.iter().map(|(_, id, phi)| (*id, phi.clone())).collect();
        let chosen = selector.select(&candidates)?;
        let action = options
            .iter()
            .find(|(_, id, _)| *id == chosen)
            .map(|(a, _, _)| *a)
            .ok_or_else(|| Error::InvalidAction(format!("selector returned unavailable action {}", chosen.0)))?;
        let r = mdp.reward(&state, action)?;
        state = mdp.transition(&state, action)?;
        actions.push(chosen);
        rewards.push(r);
        cumulative += r;
    }
    Ok(EpisodeTrace { actions, rewards, cumulative_reward: cumulative, final_state: state, truncated: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feat(offset: usize, block: Vec<f64>, dim: usize) -> Featurized<f64> {
        Featurized::new(offset, block, dim).unwrap()
    }

    #[test]
    fn block_vector_examples() {
        assert_eq!(block_vector(&[1.0, 2.0], ActionId(1), 3).unwrap(), vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(block_vector(&[1.0, 2.0], ActionId(0), 3).unwrap(), vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(block_vector(&[1.0, 2.0], ActionId(3), 3), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn score_examples() {
        let zero = LinearPolicy::<f64>::zeros(3, 3, 1);
        assert_eq!(score(&zero, &[4.0, 5.0, 6.0]).unwrap(), 0.0);

        let unit = LinearPolicy::new(vec![0.0, 1.0, 0.0], 3, 1).unwrap();
        assert_eq!(score(&unit, &[9.0, -2.5, 7.0]).unwrap(), -2.5);

        let p = LinearPolicy::new(vec![1.0, -1.0, 2.0], 3, 1).unwrap();
        let phi = [3.0, 0.0, 1.0];
        let oracle: f64 = p.theta().iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
        assert_eq!(oracle, 5.0);
        assert_eq!(score(&p, &phi).unwrap(), 5.0);
        assert!(matches!(score(&p, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn greedy_examples() {
        let p = LinearPolicy::new(vec![1.0; 6], 1, 6).unwrap();
        let single = vec![(ActionId(4), feat(4, vec![-3.0], 6))];
        assert_eq!(greedy_action(&p, &single).unwrap(), ActionId(4));

        let two = vec![(ActionId(0), feat(0, vec![0.2], 6)), (ActionId(1), feat(1, vec![0.7], 6))];
        assert_eq!(greedy_action(&p, &two).unwrap(), ActionId(1));

        let tie = vec![(ActionId(5), feat(5, vec![0.5], 6)), (ActionId(3), feat(3, vec![0.5], 6))];
        assert_eq!(greedy_action(&p, &tie).unwrap(), ActionId(3));

        assert!(matches!(greedy_action(&p, &[]), Err(Error::TerminalState)));
    }

    #[test]
    fn intercepts_shift_values() {
        let p = LinearPolicy::with_intercepts(vec![0.0; 4], vec![0.0, 2.0], 2, 2).unwrap();
        let c = vec![(ActionId(0), feat(0, vec![1.0, 1.0], 4)), (ActionId(1), feat(2, vec![0.0, 0.0], 4))];
        assert_eq!(greedy_action(&p, &c).unwrap(), ActionId(1));
    }

    #[test]
    fn rejects_non_finite_weights() {
        assert!(LinearPolicy::new(vec![f64::NAN], 1, 1).is_err());
        assert!(LinearPolicy::with_intercepts(vec![0.0], vec![f64::INFINITY], 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn block_slice_identity(
            phi in proptest::collection::vec(-10.0f64..10.0, 1..6),
            theta_seed in proptest::collection::vec(-10.0f64..10.0, 36),
            a in 0usize..6,
        ) {
            let m = phi.len();
            let num_actions = 6;
            let theta: Vec<f64> = theta_seed.iter().cycle().take(m * num_actions).copied().collect();
            let big = block_vector(&phi, ActionId(a), num_actions).unwrap();
            let full: f64 = theta.iter().zip(&big).map(|(x, y)| x * y).sum();
            let slice: f64 = theta[a * m..(a + 1) * m].iter().zip(&phi).map(|(x, y)| x * y).sum();
            prop_assert!((full - slice).abs() <= 1e-9);
        }

        #[test]
        fn blocks_disjoint_and_score_local(
            phi in proptest::collection::vec(0.5f64..2.0, 1..5),
            a in 0usize..4, b in 0usize..4,
            noise in -5.0f64..5.0,
        ) {
            prop_assume!(a != b);
            let va = block_vector(&phi, ActionId(a), 4).unwrap();
            let vb = block_vector(&phi, ActionId(b), 4).unwrap();
            prop_assert!(va.iter().zip(&vb).all(|(x, y)| *x == 0.0 || *y == 0.0));

            let m = phi.len();
            let theta = vec![1.0; m * 4];
            let mut perturbed = theta.clone();
            for v in &mut perturbed[b * m..(b + 1) * m] { *v += noise; }
            let p1 = LinearPolicy::new(theta, m, 4).unwrap();
            let p2 = LinearPolicy::new(perturbed, m, 4).unwrap();
            prop_assert_eq!(score(&p1, &va).unwrap(), score(&p2, &va).unwrap());
        }
    }
}
