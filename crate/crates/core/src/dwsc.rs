//! Datum-wise sparse classification as a feature-acquisition process.
//!
//! A state is a datum `x` together with the mask `z` of features acquired so
//! far. Each step either acquires one unknown feature at cost `lambda` or
//! emits a label, which ends the episode with reward 0 (correct) or -1.
//! The cumulative reward of an episode is therefore
//! `-(0/1 loss) - lambda * ||z||_0`.
//!
//! Two embeddings are supported. The unconstrained one places
//! `phi(x, z) = (z, mu(x, z))` in the block of the chosen action. The
//! constrained one scores feature actions from `z` alone, which forces a
//! single acquisition order shared by every input; its global layout is
//! `n` feature blocks of length `n` followed by `c` label blocks of length
//! `3n` holding `(z, z, mu(x, z))`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Featurized, LinearPolicy, Mdp};
use crate::scalar::Scalar;

/// Bit set of acquired features.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    words: Vec<u64>,
    len: usize,
}

impl FeatureMask {
    pub fn empty(len: usize) -> Self {
        FeatureMask { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut m = Self::empty(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            if b {
                m.insert(j);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, j: usize) -> bool {
        j < self.len && self.words[j / 64] >> (j % 64) & 1 == 1
    }

    /// Number of acquired features, `||z||_0`.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Copy of this mask with feature `j` acquired.
    pub fn with(&self, j: usize) -> Result<Self> {
        if j >= self.len {
            return Err(Error::InvalidAction(format!("feature {j} out of range for {} features", self.len)));
        }
        if self.contains(j) {
            return Err(Error::InvalidAction(format!("feature {j} already acquired")));
        }
        let mut next = self.clone();
        next.insert(j);
        Ok(next)
    }

    pub(crate) fn insert(&mut self, j: usize) {
        self.words[j / 64] |= 1 << (j % 64);
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&j| self.contains(j))
    }

    pub fn to_reals<F: Scalar>(&self) -> Vec<F> {
        (0..self.len).map(|j| if self.contains(j) { F::one() } else { F::zero() }).collect()
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            f.write_str(if self.contains(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureMask({self})")
    }
}

impl FromStr for FeatureMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!("bad mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMask::from_bits(&bits))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum DwscAction {
    SelectFeature(usize),
    Classify(usize),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Featurization {
    Unconstrained,
    Constrained,
}

/// Per-feature acquisition cost.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RewardParams<F> {
    lambda: F,
}

impl<F: Scalar> RewardParams<F> {
    pub fn new(lambda: F) -> Result<Self> {
        if !lambda.is_finite() || lambda < F::zero() || lambda >= F::one() {
            return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1), got {lambda}")));
        }
        if lambda > F::lit(0.5) {
            log::warn!("lambda = {lambda} is large; misclassifying may become cheaper than acquiring features");
        }
        Ok(RewardParams { lambda })
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }
}

impl<F: Scalar> Default for RewardParams<F> {
    fn default() -> Self {
        RewardParams { lambda: F::lit(0.01) }
    }
}

/// A state `(x, z)`; terminal once a label has been emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct DatumState<F> {
    pub x: Arc<[F]>,
    pub z: FeatureMask,
    pub predicted_label: Option<usize>,
}

impl<F: Scalar> DatumState<F> {
    pub fn initial(x: Arc<[F]>) -> Self {
        let z = FeatureMask::empty(x.len());
        DatumState { x, z, predicted_label: None }
    }

    pub fn is_terminal(&self) -> bool {
        self.predicted_label.is_some()
    }
}

/// `mu(x, z)`: `x` with unacquired entries zeroed.
pub fn masked_restrict<F: Scalar>(x: &[F], z: &FeatureMask) -> Result<Vec<F>> {
    if x.len() != z.len() {
        return Err(Error::dim(z.len(), x.len()));
    }
    Ok(x.iter().enumerate().map(|(j, &v)| if z.contains(j) { v } else { F::zero() }).collect())
}

/// Problem geometry: `n` features, `c` labels, embedding and cost.
#[derive(Clone, Debug)]
pub struct DwscModel<F> {
    n: usize,
    c: usize,
    featurization: Featurization,
    params: RewardParams<F>,
}

impl<F: Scalar> DwscModel<F> {
    pub fn new(n: usize, c: usize, featurization: Featurization, params: RewardParams<F>) -> Result<Self> {
        if n == 0 || c == 0 {
            return Err(Error::InvalidArgument("need at least one feature and one label".into()));
        }
        Ok(DwscModel { n, c, featurization, params })
    }

    pub fn num_features(&self) -> usize {
        self.n
    }

    pub fn num_labels(&self) -> usize {
        self.c
    }

    pub fn featurization(&self) -> Featurization {
        self.featurization
    }

    pub fn params(&self) -> RewardParams<F> {
        self.params
    }

    pub fn num_actions(&self) -> usize {
        self.n + self.c
    }

    /// Length of `phi(x, z)`.
    pub fn block_dim(&self) -> usize {
        2 * self.n
    }

    pub fn theta_dim(&self) -> usize {
        match self.featurization {
            Featurization::Unconstrained => self.num_actions() * 2 * self.n,
            Featurization::Constrained => self.n * self.n + self.c * 3 * self.n,
        }
    }

    pub fn horizon_cap(&self) -> usize {
        self.n + 1
    }

    pub fn zero_policy(&self) -> LinearPolicy<F> {
        LinearPolicy::zeros(self.theta_dim(), self.block_dim(), self.num_actions())
    }

    pub fn action_id(&self, action: DwscAction) -> ActionId {
        match action {
            DwscAction::SelectFeature(j) => ActionId(j),
            DwscAction::Classify(y) => ActionId(self.n + y),
        }
    }

    pub fn action_from_id(&self, id: ActionId) -> Result<DwscAction> {
        match id.0 {
            j if j < self.n => Ok(DwscAction::SelectFeature(j)),
            i if i < self.n + self.c => Ok(DwscAction::Classify(i - self.n)),
            i => Err(Error::InvalidAction(format!("action index {i} out of range"))),
        }
    }

    pub fn check_policy(&self, policy: &LinearPolicy<F>) -> Result<()> {
        if policy.theta_dim() != self.theta_dim() {
            return Err(Error::dim(self.theta_dim(), policy.theta_dim()));
        }
        if policy.num_actions() != self.num_actions() {
            return Err(Error::dim(self.num_actions(), policy.num_actions()));
        }
        Ok(())
    }

    fn check_action(&self, action: DwscAction) -> Result<()> {
        match action {
            DwscAction::SelectFeature(j) if j >= self.n => {
                Err(Error::InvalidAction(format!("feature {j} out of range for {} features", self.n)))
            }
            DwscAction::Classify(y) if y >= self.c => Err(Error::InvalidAction(format!("label {y} out of range for {} labels", self.c))),
            _ => Ok(()),
        }
    }

    /// Unselected feature actions by index, then every label action.
    pub fn available_actions(&self, state: &DatumState<F>) -> Result<Vec<DwscAction>> {
        if state.is_terminal() {
            return Err(Error::TerminalState);
        }
        let mut out: Vec<DwscAction> = (0..self.n).filter(|&j| !state.z.contains(j)).map(DwscAction::SelectFeature).collect();
        out.extend((0..self.c).map(DwscAction::Classify));
        Ok(out)
    }

    pub fn transition(&self, state: &DatumState<F>, action: DwscAction) -> Result<DatumState<F>> {
        if state.is_terminal() {
            return Err(Error::TerminalState);
        }
        self.check_action(action)?;
        match action {
            DwscAction::SelectFeature(j) => Ok(DatumState { x: state.x.clone(), z: state.z.with(j)?, predicted_label: None }),
            DwscAction::Classify(y) => Ok(DatumState { x: state.x.clone(), z: state.z.clone(), predicted_label: Some(y) }),
        }
    }

    pub fn reward(&self, action: DwscAction, true_label: usize) -> F {
        match action {
            DwscAction::SelectFeature(_) => -self.params.lambda,
            DwscAction::Classify(y) if y == true_label => F::zero(),
            DwscAction::Classify(_) => -F::one(),
        }
    }

    fn check_inputs(&self, x: &[F], z: &FeatureMask) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::dim(self.n, x.len()));
        }
        if z.len() != self.n {
            return Err(Error::dim(self.n, z.len()));
        }
        Ok(())
    }

    /// `(z, mu(x, z))` placed in the block of `action`.
    pub fn featurize_unconstrained(&self, x: &[F], z: &FeatureMask, action: DwscAction) -> Result<Featurized<F>> {
        self.check_inputs(x, z)?;
        self.check_action(action)?;
        let mut phi = z.to_reals::<F>();
        phi.extend(masked_restrict(x, z)?);
        let id = self.action_id(action);
        Featurized::new(id.0 * 2 * self.n, phi, self.num_actions() * 2 * self.n)
    }

    /// Feature actions see only `z`; label actions see `(z, z, mu(x, z))`.
    pub fn featurize_constrained(&self, x: &[F], z: &FeatureMask, action: DwscAction) -> Result<Featurized<F>> {
        self.check_inputs(x, z)?;
        self.check_action(action)?;
        let n = self.n;
        let dim = n * n + self.c * 3 * n;
        match action {
            DwscAction::SelectFeature(j) => Featurized::new(j * n, z.to_reals(), dim),
            DwscAction::Classify(y) => {
                let zr = z.to_reals::<F>();
                let mut block = Vec::with_capacity(3 * n);
                block.extend_from_slice(&zr);
                block.extend_from_slice(&zr);
                block.extend(masked_restrict(x, z)?);
                Featurized::new(n * n + y * 3 * n, block, dim)
            }
        }
    }

    pub fn featurize(&self, x: &[F], z: &FeatureMask, action: DwscAction) -> Result<Featurized<F>> {
        match self.featurization {
            Featurization::Unconstrained => self.featurize_unconstrained(x, z, action),
            Featurization::Constrained => self.featurize_constrained(x, z, action),
        }
    }

    /// Weight that acquiring feature `k` of `x` adds to the score of action `a`.
    fn contribution(&self, theta: &[F], x: &[F], a: usize, k: usize) -> F {
        let n = self.n;
        match self.featurization {
            Featurization::Unconstrained => {
                let base = a * 2 * n;
                theta[base + k] + theta[base + n + k] * x[k]
            }
            Featurization::Constrained if a < n => theta[a * n + k],
            Featurization::Constrained => {
                let base = n * n + (a - n) * 3 * n;
                theta[base + k] + theta[base + n + k] + theta[base + 2 * n + k] * x[k]
            }
        }
    }

    /// Scores of every action at `(x, z)`, updated from the previous step's
    /// table in `O(n + c)` when the cache and the newly acquired feature are
    /// supplied.
    pub fn incremental_action_scores(
        &self,
        policy: &LinearPolicy<F>,
        x: &[F],
        z: &FeatureMask,
        prev: Option<ActionScores<F>>,
        newly_added: Option<usize>,
    ) -> Result<ActionScores<F>> {
        self.check_policy(policy)?;
        self.check_inputs(x, z)?;
        let theta = policy.theta();
        match (prev, newly_added) {
            (None, None) => {
                let mut scores = policy.intercepts().to_vec();
                for k in z.ones() {
                    for (a, s) in scores.iter_mut().enumerate() {
                        *s += self.contribution(theta, x, a, k);
                    }
                }
                Ok(ActionScores { mask: z.clone(), scores })
            }
            (Some(mut cache), Some(j)) => {
                if cache.scores.len() != self.num_actions() || cache.mask.len() != self.n {
                    return Err(Error::CacheInvalid("cache built for a different problem".into()));
                }
                let expected = cache.mask.with(j).map_err(|e| Error::CacheInvalid(e.to_string()))?;
                if &expected != z {
                    return Err(Error::CacheInvalid(format!("cache mask {} plus feature {j} is not {}", cache.mask, z)));
                }
                for (a, s) in cache.scores.iter_mut().enumerate() {
                    *s += self.contribution(theta, x, a, j);
                }
                cache.mask = expected;
                Ok(cache)
            }
            _ => Err(Error::CacheInvalid("previous scores and the new feature must be given together".into())),
        }
    }

    /// Greedy inference from `z = 0`.
    pub fn classify(&self, policy: &LinearPolicy<F>, x: &[F]) -> Result<Classification> {
        let mut mask = FeatureMask::empty(self.n);
        let mut table = self.incremental_action_scores(policy, x, &mask, None, None)?;
        let mut actions = Vec::new();
        loop {
            let best = table.best_available(self.n);
            actions.push(best);
            match self.action_from_id(best)? {
                DwscAction::Classify(label) => {
                    return Ok(Classification { label, steps: actions.len(), mask, actions });
                }
                DwscAction::SelectFeature(j) => {
                    mask = mask.with(j)?;
                    table = self.incremental_action_scores(policy, x, &mask, Some(table), Some(j))?;
                }
            }
        }
    }

    pub fn episode(&self, label: usize) -> DwscEpisode<'_, F> {
        DwscEpisode { model: self, label }
    }
}

/// Cached per-action scores for one `(x, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionScores<F> {
    mask: FeatureMask,
    scores: Vec<F>,
}

impl<F: Scalar> ActionScores<F> {
    pub fn mask(&self) -> &FeatureMask {
        &self.mask
    }

    /// Indexed by [`ActionId`]; entries of already-acquired features are kept
    /// but never selected.
    pub fn scores(&self) -> &[F] {
        &self.scores
    }

    /// Best available action; ties go to the smallest index.
    pub fn best_available(&self, n: usize) -> ActionId {
        let mut best = n;
        let mut best_score = self.scores[n];
        for (a, &s) in self.scores.iter().enumerate() {
            if a < n && self.mask.contains(a) {
                continue;
            }
            if s > best_score || (s == best_score && a < best) {
                best = a;
                best_score = s;
            }
        }
        ActionId(best)
    }
}

/// Result of greedy inference on one datum.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: usize,
    pub mask: FeatureMask,
    /// `||z||_0 + 1`.
    pub steps: usize,
    pub actions: Vec<ActionId>,
}

/// The feature-acquisition process for one labeled datum.
#[derive(Clone, Copy, Debug)]
pub struct DwscEpisode<'m, F> {
    model: &'m DwscModel<F>,
    label: usize,
}

impl<F: Scalar> Mdp<F> for DwscEpisode<'_, F> {
    type State = DatumState<F>;
    type Action = DwscAction;

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn theta_dim(&self) -> usize {
        self.model.theta_dim()
    }

    fn is_terminal(&self, state: &DatumState<F>) -> bool {
        state.is_terminal()
    }

    fn available_actions(&self, state: &DatumState<F>) -> Result<Vec<DwscAction>> {
        self.model.available_actions(state)
    }

    fn action_id(&self, action: DwscAction) -> ActionId {
        self.model.action_id(action)
    }

    fn transition(&self, state: &DatumState<F>, action: DwscAction) -> Result<DatumState<F>> {
        self.model.transition(state, action)
    }

    fn reward(&self, _state: &DatumState<F>, action: DwscAction) -> Result<F> {
        Ok(self.model.reward(action, self.label))
    }

    fn featurize(&self, state: &DatumState<F>, action: DwscAction) -> Result<Featurized<F>> {
        self.model.featurize(&state.x, &state.z, action)
    }

    fn effort(&self, state: &DatumState<F>) -> usize {
        state.z.count()
    }
}
