//! Approximate policy iteration with rollouts.
//!
//! Each iteration samples random states from the training set, estimates the
//! return of every available action by applying it and then following the
//! behavior policy to termination, and fits a new linear action-value
//! function to those returns by ridge least squares. Rollouts after the first
//! iteration follow an alpha-mixture: at every step the freshest policy is
//! followed with probability `alpha`, the one before it otherwise.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDocument, TabularDataset};
use crate::dwsc::{DatumState, DwscEpisode, DwscModel, FeatureMask};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::mdp::{greedy_action, run_episode, ActionId, ActionSelector, Featurized, LinearPolicy, Mdp};
use crate::scalar::Scalar;
use crate::text::{LabelMode, LabelVector, ReadingState, TextEpisode, TextModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub num_states: usize,
    pub iterations: usize,
    pub alpha: f64,
    /// Rollouts per action, `K`.
    pub rollouts_per_action: usize,
    pub ridge: f64,
    /// Share of sampled feature-acquisition states forced to `z = 0`.
    pub zero_mask_fraction: f64,
    /// Fit one bias per action alongside `theta`.
    pub intercept: bool,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            num_states: 2000,
            iterations: 10,
            alpha: 0.9,
            rollouts_per_action: 1,
            ridge: 1e-6,
            zero_mask_fraction: 0.25,
            intercept: true,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if self.num_states == 0 || self.rollouts_per_action == 0 {
            return Err(Error::InvalidArgument("num_states and rollouts_per_action must be positive".into()));
        }
        if !unit(self.alpha) || !unit(self.zero_mask_fraction) {
            return Err(Error::InvalidArgument("alpha and zero_mask_fraction must lie in [0, 1]".into()));
        }
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(Error::InvalidArgument("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which datum a sample came from and how far into the episode its state was.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateTag {
    pub datum: usize,
    /// Features acquired or sentences read.
    pub effort: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutSample<F> {
    pub action: ActionId,
    pub phi_sa: Featurized<F>,
    pub estimated_return: F,
    pub state_tag: StateTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyShape {
    pub theta_dim: usize,
    pub block_dim: usize,
    pub num_actions: usize,
}

impl PolicyShape {
    pub fn zeros<F: Scalar>(&self) -> LinearPolicy<F> {
        LinearPolicy::zeros(self.theta_dim, self.block_dim, self.num_actions)
    }
}

/// A training set viewed as a family of episodes, one per item.
pub trait RolloutDomain<F: Scalar>: Sync {
    type State: Clone + Debug + Send + Sync;
    type Episode<'a>: Mdp<F, State = Self::State>
    where
        Self: 'a;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn episode(&self, index: usize) -> Self::Episode<'_>;

    fn start_state(&self, index: usize) -> Self::State;

    /// Draws a random non-terminal state of item `index`.
    fn random_state(&self, index: usize, config: &RolloutConfig, rng: &mut ChaCha8Rng) -> Self::State;

    fn horizon_cap(&self, index: usize) -> usize;

    fn shape(&self) -> PolicyShape;

    /// Lowest and highest possible episode return.
    fn return_bounds(&self) -> (F, F);
}

/// Feature-acquisition episodes over a labeled tabular dataset.
pub struct DwscDomain<'a, F> {
    pub model: &'a DwscModel<F>,
    pub data: &'a TabularDataset<F>,
}

impl<'a, F: Scalar> DwscDomain<'a, F> {
    pub fn new(model: &'a DwscModel<F>, data: &'a TabularDataset<F>) -> Result<Self> {
        if data.num_features() != model.num_features() {
            return Err(Error::dim(model.num_features(), data.num_features()));
        }
        if data.num_classes() > model.num_labels() {
            return Err(Error::dim(model.num_labels(), data.num_classes()));
        }
        Ok(DwscDomain { model, data })
    }
}

impl<F: Scalar> RolloutDomain<F> for DwscDomain<'_, F> {
    type State = DatumState<F>;
    type Episode<'b>
        = DwscEpisode<'b, F>
    where
        Self: 'b;

    fn len(&self) -> usize {
        self.data.len()
    }

    fn episode(&self, index: usize) -> DwscEpisode<'_, F> {
        self.model.episode(self.data.rows()[index].label)
    }

    fn start_state(&self, index: usize) -> DatumState<F> {
        DatumState::initial(self.data.rows()[index].features.clone())
    }

    fn random_state(&self, index: usize, config: &RolloutConfig, rng: &mut ChaCha8Rng) -> DatumState<F> {
        let n = self.model.num_features();
        let forced_empty = rng.gen_bool(config.zero_mask_fraction);
        let z = if forced_empty {
            FeatureMask::empty(n)
        } else {
            let bits: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            FeatureMask::from_bits(&bits)
        };
        DatumState { x: self.data.rows()[index].features.clone(), z, predicted_label: None }
    }

    fn horizon_cap(&self, _index: usize) -> usize {
        self.model.horizon_cap()
    }

    fn shape(&self) -> PolicyShape {
        PolicyShape { theta_dim: self.model.theta_dim(), block_dim: self.model.block_dim(), num_actions: self.model.num_actions() }
    }

    fn return_bounds(&self) -> (F, F) {
        let lambda = self.model.params().lambda();
        (-F::one() - lambda * F::from_usize_lossy(self.model.num_features()), F::zero())
    }
}

/// Reading episodes over a labeled document collection.
pub struct TextDomain<'a, F> {
    pub model: &'a TextModel,
    pub docs: &'a [LabeledDocument<F>],
}

impl<'a, F: Scalar> TextDomain<'a, F> {
    pub fn new(model: &'a TextModel, docs: &'a [LabeledDocument<F>]) -> Result<Self> {
        for d in docs {
            if d.doc.vocab_dim() != model.vocab_dim() {
                return Err(Error::dim(model.vocab_dim(), d.doc.vocab_dim()));
            }
            if d.labels.len() != model.num_labels() {
                return Err(Error::dim(model.num_labels(), d.labels.len()));
            }
            if d.labels.count() == 0 {
                return Err(Error::InvalidDataset(format!("document {} has no category", d.doc.id())));
            }
        }
        Ok(TextDomain { model, docs })
    }
}

impl<F: Scalar> RolloutDomain<F> for TextDomain<'_, F> {
    type State = ReadingState<F>;
    type Episode<'b>
        = TextEpisode<'b>
    where
        Self: 'b;

    fn len(&self) -> usize {
        self.docs.len()
    }

    fn episode(&self, index: usize) -> TextEpisode<'_> {
        self.model.episode(&self.docs[index].labels)
    }

    fn start_state(&self, index: usize) -> ReadingState<F> {
        ReadingState::initial(Arc::clone(&self.docs[index].doc), self.model.num_labels())
    }

    fn random_state(&self, index: usize, _config: &RolloutConfig, rng: &mut ChaCha8Rng) -> ReadingState<F> {
        let doc = Arc::clone(&self.docs[index].doc);
        let c = self.model.num_labels();
        let p = rng.gen_range(1..=doc.len());
        let y_hat = match self.model.mode() {
            LabelMode::Mono => LabelVector::zeros(c),
            LabelMode::Multi if c == 1 => LabelVector::zeros(c),
            LabelMode::Multi => loop {
                let bits: Vec<bool> = (0..c).map(|_| rng.gen_bool(0.5)).collect();
                if !bits.iter().all(|b| *b) {
                    break LabelVector::from_bits(bits);
                }
            },
        };
        ReadingState { doc, p, y_hat, terminal: false }
    }

    fn horizon_cap(&self, index: usize) -> usize {
        self.model.horizon_cap(&self.docs[index].doc)
    }

    fn shape(&self) -> PolicyShape {
        PolicyShape { theta_dim: self.model.theta_dim(), block_dim: self.model.block_dim(), num_actions: self.model.num_actions() }
    }

    fn return_bounds(&self) -> (F, F) {
        (F::zero(), F::one())
    }
}

/// Mixes a master seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Step 1: `num_states` random states, items drawn uniformly with replacement.
pub fn sample_states<F: Scalar, D: RolloutDomain<F>>(
    domain: &D,
    config: &RolloutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, D::State)>> {
    if domain.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    Ok((0..config.num_states)
        .map(|_| {
            let index = rng.gen_range(0..domain.len());
            (index, domain.random_state(index, config, rng))
        })
        .collect())
}

/// Policy followed during rollouts.
#[derive(Clone, Copy, Debug)]
pub enum Behavior<'p, F> {
    Uniform,
    Greedy(&'p LinearPolicy<F>),
    /// Per step: `new` with probability `alpha`, else `prev` (uniform when
    /// there is no previous policy yet).
    Mixture {
        new: &'p LinearPolicy<F>,
        prev: Option<&'p LinearPolicy<F>>,
        alpha: f64,
    },
}

struct BehaviorSelector<'b, 'p, F> {
    behavior: &'b Behavior<'p, F>,
    rng: &'b mut ChaCha8Rng,
}

impl<F: Scalar> ActionSelector<F> for BehaviorSelector<'_, '_, F> {
    fn select(&mut self, candidates: &[(ActionId, Featurized<F>)]) -> Result<ActionId> {
        if candidates.is_empty() {
            return Err(Error::TerminalState);
        }
        let uniform = |rng: &mut ChaCha8Rng| candidates[rng.gen_range(0..candidates.len())].0;
        match *self.behavior {
            Behavior::Uniform => Ok(uniform(self.rng)),
            Behavior::Greedy(p) => greedy_action(p, candidates),
            Behavior::Mixture { new, prev: Some(prev), alpha } => alpha_mixture_select(prev, new, alpha, self.rng, candidates),
            Behavior::Mixture { new, prev: None, alpha } => {
                if self.rng.gen_bool(alpha) {
                    greedy_action(new, candidates)
                } else {
                    Ok(uniform(self.rng))
                }
            }
        }
    }
}

/// Greedy choice of `policy_new` with probability `alpha`, else of
/// `policy_prev`.
pub fn alpha_mixture_select<F: Scalar, R: Rng + ?Sized>(
    policy_prev: &LinearPolicy<F>,
    policy_new: &LinearPolicy<F>,
    alpha: f64,
    rng: &mut R,
    featurized_actions: &[(ActionId, Featurized<F>)],
) -> Result<ActionId> {
    if rng.gen_bool(alpha) {
        greedy_action(policy_new, featurized_actions)
    } else {
        greedy_action(policy_prev, featurized_actions)
    }
}

/// Step 2: rollout estimate of every available action's return at `state`.
pub fn evaluate_actions<F: Scalar, D: RolloutDomain<F>>(
    domain: &D,
    index: usize,
    state: &D::State,
    behavior: &Behavior<'_, F>,
    config: &RolloutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RolloutSample<F>>> {
    let mdp = domain.episode(index);
    let cap = domain.horizon_cap(index);
    let placeholder = domain.shape().zeros::<F>();
    let k = config.rollouts_per_action;
    let tag = StateTag { datum: index, effort: mdp.effort(state) };

    let mut samples = Vec::new();
    for action in mdp.available_actions(state)? {
        let immediate = mdp.reward(state, action)?;
        let next = mdp.transition(state, action)?;
        let continuation = if mdp.is_terminal(&next) {
            F::zero()
        } else {
            let mut total = F::zero();
            for _ in 0..k {
                let mut selector = BehaviorSelector { behavior, rng: &mut *rng };
                let trace = run_episode(&mdp, &placeholder, next.clone(), cap, Some(&mut selector))?;
                if trace.truncated {
                    return Err(Error::Truncated(trace.actions.len()));
                }
                total += trace.cumulative_reward;
            }
            total / F::from_usize_lossy(k)
        };
        samples.push(RolloutSample {
            action: mdp.action_id(action),
            phi_sa: mdp.featurize(state, action)?,
            estimated_return: immediate + continuation,
            state_tag: tag,
        });
    }
    Ok(samples)
}

/// Step 3: ridge least squares `argmin sum (<theta, Phi> - R)^2 + ridge |theta|^2`.
pub fn fit_policy<F: Scalar>(samples: &[RolloutSample<F>], shape: PolicyShape, ridge: F) -> Result<LinearPolicy<F>> {
    fit(samples, shape, ridge, false)
}

/// As [`fit_policy`], with one bias per action fitted jointly (and
/// penalized by the same ridge).
pub fn fit_policy_with_intercepts<F: Scalar>(samples: &[RolloutSample<F>], shape: PolicyShape, ridge: F) -> Result<LinearPolicy<F>> {
    fit(samples, shape, ridge, true)
}

struct ActionBlock {
    offset: usize,
    len: usize,
    members: Vec<usize>,
}

// Every embedding is supported on its action's block, so the Gram matrix is
// block diagonal and each action is an independent small system.
fn fit<F: Scalar>(samples: &[RolloutSample<F>], shape: PolicyShape, ridge: F, intercept: bool) -> Result<LinearPolicy<F>> {
    if !ridge.is_finite() || ridge < F::zero() {
        return Err(Error::InvalidArgument("ridge must be non-negative".into()));
    }
    if samples.len() * 10 < shape.theta_dim {
        log::warn!("fitting {} weights from only {} samples", shape.theta_dim, samples.len());
    }

    let mut blocks: BTreeMap<usize, ActionBlock> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if s.phi_sa.dim() != shape.theta_dim {
            return Err(Error::dim(shape.theta_dim, s.phi_sa.dim()));
        }
        if s.action.0 >= shape.num_actions {
            return Err(Error::InvalidAction(format!("action index {} out of range", s.action.0)));
        }
        if !s.estimated_return.is_finite() {
            return Err(Error::NumericalFailure("non-finite rollout return".into()));
        }
        let b = blocks.entry(s.action.0).or_insert_with(|| ActionBlock {
            offset: s.phi_sa.offset(),
            len: s.phi_sa.block().len(),
            members: Vec::new(),
        });
        if b.offset != s.phi_sa.offset() || b.len != s.phi_sa.block().len() {
            return Err(Error::InvalidArgument(format!("action {} has samples in different blocks", s.action.0)));
        }
        b.members.push(i);
    }
    let mut spans: Vec<(usize, usize)> = blocks.values().map(|b| (b.offset, b.offset + b.len)).collect();
    spans.sort_unstable();
    if spans.windows(2).any(|w| w[0].1 > w[1].0) {
        return Err(Error::InvalidArgument("action blocks overlap".into()));
    }

    let solved: Vec<(usize, Vec<F>)> = blocks
        .par_iter()
        .map(|(&action, b)| {
            let m = b.len + usize::from(intercept);
            let mut gram = vec![F::zero(); m * m];
            let mut rhs = vec![F::zero(); m];
            let mut row = vec![F::zero(); m];
            for &i in &b.members {
                let s = &samples[i];
                row[..b.len].copy_from_slice(s.phi_sa.block());
                if intercept {
                    row[b.len] = F::one();
                }
                for r in 0..m {
                    if row[r] == F::zero() {
                        continue;
                    }
                    for c in 0..=r {
                        gram[r * m + c] += row[r] * row[c];
                    }
                    rhs[r] += row[r] * s.estimated_return;
                }
            }
            for d in 0..m {
                gram[d * m + d] += ridge;
            }
            solve_spd(gram, m, rhs).map(|w| (action, w))
        })
        .collect::<Result<_>>()?;

    let mut theta = vec![F::zero(); shape.theta_dim];
    let mut intercepts = vec![F::zero(); shape.num_actions];
    for (action, w) in solved {
        let b = &blocks[&action];
        theta[b.offset..b.offset + b.len].copy_from_slice(&w[..b.len]);
        if intercept {
            intercepts[action] = w[b.len];
        }
    }
    LinearPolicy::with_intercepts(theta, intercepts, shape.block_dim, shape.num_actions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub mean_training_reward: f64,
    /// Mean features acquired (or sentences read) by the greedy policy.
    pub mean_features_used: f64,
    pub wall_ms: u64,
}

impl IterationDiagnostics {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("diagnostics serialize")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub policy: LinearPolicy<F>,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Greedy episodes of `policy` from every item's start state; returns mean
/// return and mean effort.
pub fn mean_greedy_return<F: Scalar, D: RolloutDomain<F>>(domain: &D, policy: &LinearPolicy<F>) -> Result<(f64, f64)> {
    if domain.is_empty() {
        return Err(Error::InvalidDataset("empty dataset".into()));
    }
    let per_item: Vec<(f64, usize)> = (0..domain.len())
        .into_par_iter()
        .map(|i| {
            let mdp = domain.episode(i);
            let trace = run_episode(&mdp, policy, domain.start_state(i), domain.horizon_cap(i), None)?;
            if trace.truncated {
                return Err(Error::Truncated(trace.actions.len()));
            }
            Ok((trace.cumulative_reward.as_f64(), mdp.effort(&trace.final_state)))
        })
        .collect::<Result<_>>()?;
    let n = per_item.len() as f64;
    let reward = per_item.iter().map(|(r, _)| r).sum::<f64>() / n;
    let effort = per_item.iter().map(|(_, e)| *e as f64).sum::<f64>() / n;
    Ok((reward, effort))
}

/// Runs `config.iterations` rounds of sampling, rollout evaluation and
/// fitting. Iteration 0 rolls out a uniformly random policy.
pub fn train<F: Scalar, D: RolloutDomain<F>>(domain: &D, config: &RolloutConfig) -> Result<TrainOutcome<F>> {
    config.validate()?;
    if domain.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    let shape = domain.shape();
    let ridge = F::lit(config.ridge);
    let mut current = shape.zeros::<F>();
    let mut previous: Option<LinearPolicy<F>> = None;
    let mut diagnostics = Vec::with_capacity(config.iterations);

    for t in 0..config.iterations {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2 * t as u64));
        let states = sample_states(domain, config, &mut rng)?;

        let behavior =
            if t == 0 { Behavior::Uniform } else { Behavior::Mixture { new: &current, prev: previous.as_ref(), alpha: config.alpha } };
        let rollout_seed = derive_seed(config.seed, 2 * t as u64 + 1);
        let per_state: Vec<Vec<RolloutSample<F>>> = states
            .par_iter()
            .enumerate()
            .map(|(i, (index, state))| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rollout_seed, i as u64));
                evaluate_actions(domain, *index, state, &behavior, config, &mut rng)
            })
            .collect::<Result<_>>()?;
        let samples: Vec<RolloutSample<F>> = per_state.into_iter().flatten().collect();

        let fitted =
            if config.intercept { fit_policy_with_intercepts(&samples, shape, ridge)? } else { fit_policy(&samples, shape, ridge)? };
        let replaced = std::mem::replace(&mut current, fitted);
        // The zero policy of iteration 0 was never fitted; the uniform fallback stands in for it.
        previous = (t > 0).then_some(replaced);

        let (mean_training_reward, mean_features_used) = mean_greedy_return(domain, &current)?;
        let diag =
            IterationDiagnostics { iteration: t, mean_training_reward, mean_features_used, wall_ms: started.elapsed().as_millis() as u64 };
        log::debug!("{}", diag.to_json_line());
        diagnostics.push(diag);
    }
    Ok(TrainOutcome { policy: current, diagnostics })
}
