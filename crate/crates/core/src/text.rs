//! Sentence-by-sentence text classification.
//!
//! The agent reads a document one sentence at a time. At each step it can
//! assign a category, move to the next sentence, or stop. The only nonzero
//! reward is paid on `stop`: the per-document F1 between assigned and true
//! categories (multi-label), or 1/0 accuracy (mono-label, where a single
//! assignment forces the stop).
//!
//! Action enumeration: `classify-as-k` for `k in 0..C`, then `next`, then
//! `stop`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{run_episode, ActionId, EpisodeTrace, Featurized, LinearPolicy, Mdp};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector<F> {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<F>,
}

impl<F: Scalar> SparseVector<F> {
    /// Entries must have strictly increasing indices below `dim`.
    pub fn new(dim: usize, entries: Vec<(usize, F)>) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for &(i, _) in &entries {
            if i >= dim || prev.is_some_and(|p| p >= i) {
                return Err(Error::InvalidArgument(format!("sparse index {i} out of order or range (dim {dim})")));
            }
            prev = Some(i);
        }
        let (indices, values) = entries.into_iter().unzip();
        Ok(SparseVector { dim, indices, values })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, indices: Vec::new(), values: Vec::new() }
    }

    pub fn from_dense(v: &[F]) -> Self {
        let (indices, values) = v.iter().enumerate().filter(|(_, x)| **x != F::zero()).map(|(i, x)| (i, *x)).unzip();
        SparseVector { dim: v.len(), indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> F {
        self.values.iter().map(|v| *v * *v).sum::<F>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == F::zero())
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// A pre-segmented document: one feature vector per sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Document<F> {
    id: String,
    sentences: Vec<SparseVector<F>>,
}

impl<F: Scalar> Document<F> {
    /// Sentences must share a dimension and be unit-norm or zero.
    pub fn new(id: impl Into<String>, sentences: Vec<SparseVector<F>>) -> Result<Self> {
        let id = id.into();
        let first = sentences.first().ok_or_else(|| Error::InvalidDataset(format!("document {id} has no sentences")))?;
        let dim = first.dim();
        for (i, s) in sentences.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::dim(dim, s.dim()));
            }
            let norm = s.norm();
            if !s.is_zero() && (norm - F::one()).abs() > F::lit(1e-6) {
                return Err(Error::InvalidDataset(format!("sentence {i} of {id} has norm {norm}, expected 1")));
            }
        }
        Ok(Document { id, sentences })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn vocab_dim(&self) -> usize {
        self.sentences[0].dim()
    }

    pub fn sentences(&self) -> &[SparseVector<F>] {
        &self.sentences
    }

    /// Indices of sentences whose vector is zero.
    pub fn empty_sentences(&self) -> Vec<usize> {
        self.sentences.iter().enumerate().filter(|(_, s)| s.is_zero()).map(|(i, _)| i).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelVector {
    bits: Vec<bool>,
}

impl LabelVector {
    pub fn zeros(c: usize) -> Self {
        LabelVector { bits: vec![false; c] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        LabelVector { bits }
    }

    pub fn one_hot(c: usize, k: usize) -> Self {
        let mut v = Self::zeros(c);
        v.bits[k] = true;
        v
    }

    pub fn from_indices(c: usize, labels: &[usize]) -> Self {
        let mut v = Self::zeros(c);
        for &k in labels {
            v.bits[k] = true;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn set(&mut self, k: usize) {
        self.bits[k] = true;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(k, _)| k)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Mono,
    Multi,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum TextAction {
    Classify(usize),
    Next,
    Stop,
}

/// `(d, p, y_hat)` with a 1-based reading position.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadingState<F> {
    pub doc: Arc<Document<F>>,
    pub p: usize,
    pub y_hat: LabelVector,
    pub terminal: bool,
}

impl<F: Scalar> ReadingState<F> {
    pub fn initial(doc: Arc<Document<F>>, num_labels: usize) -> Self {
        ReadingState { doc, p: 1, y_hat: LabelVector::zeros(num_labels), terminal: false }
    }
}

/// Per-document F1 from true-positive counts.
pub fn f1_reward<F: Scalar>(y: &LabelVector, y_hat: &LabelVector) -> Result<F> {
    if y.len() != y_hat.len() {
        return Err(Error::dim(y.len(), y_hat.len()));
    }
    let actual = y.count();
    if actual == 0 {
        return Err(Error::InvalidDataset("document has no true category".into()));
    }
    let predicted = y_hat.count();
    let tp = y.bits.iter().zip(&y_hat.bits).filter(|(a, b)| **a && **b).count();
    if predicted == 0 || tp == 0 {
        return Ok(F::zero());
    }
    let precision = F::from_usize_lossy(tp) / F::from_usize_lossy(predicted);
    let recall = F::from_usize_lossy(tp) / F::from_usize_lossy(actual);
    Ok(F::lit(2.0) * precision * recall / (precision + recall))
}

pub fn mono_reward<F: Scalar>(y_index: usize, chosen: usize) -> F {
    if y_index == chosen {
        F::one()
    } else {
        F::zero()
    }
}

/// Geometry of the reading process: vocabulary size, label count, mode.
#[derive(Clone, Debug)]
pub struct TextModel {
    vocab_dim: usize,
    num_labels: usize,
    mode: LabelMode,
}

impl TextModel {
    pub fn new(vocab_dim: usize, num_labels: usize, mode: LabelMode) -> Result<Self> {
        if vocab_dim == 0 || num_labels == 0 {
            return Err(Error::InvalidArgument("vocabulary and label set must be non-empty".into()));
        }
        Ok(TextModel { vocab_dim, num_labels, mode })
    }

    pub fn vocab_dim(&self) -> usize {
        self.vocab_dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn num_actions(&self) -> usize {
        self.num_labels + 2
    }

    /// `2V + C`.
    pub fn block_dim(&self) -> usize {
        2 * self.vocab_dim + self.num_labels
    }

    pub fn theta_dim(&self) -> usize {
        self.num_actions() * self.block_dim()
    }

    pub fn horizon_cap<F>(&self, doc: &Document<F>) -> usize {
        doc.sentences.len() + self.num_labels + 1
    }

    pub fn zero_policy<F: Scalar>(&self) -> LinearPolicy<F> {
        LinearPolicy::zeros(self.theta_dim(), self.block_dim(), self.num_actions())
    }

    pub fn action_id(&self, action: TextAction) -> ActionId {
        match action {
            TextAction::Classify(k) => ActionId(k),
            TextAction::Next => ActionId(self.num_labels),
            TextAction::Stop => ActionId(self.num_labels + 1),
        }
    }

    pub fn action_from_id(&self, id: ActionId) -> Result<TextAction> {
        let c = self.num_labels;
        match id.0 {
            k if k < c => Ok(TextAction::Classify(k)),
            k if k == c => Ok(TextAction::Next),
            k if k == c + 1 => Ok(TextAction::Stop),
            k => Err(Error::InvalidAction(format!("action index {k} out of range"))),
        }
    }

    pub fn check_policy<F: Scalar>(&self, policy: &LinearPolicy<F>) -> Result<()> {
        if policy.theta_dim() != self.theta_dim() {
            return Err(Error::dim(self.theta_dim(), policy.theta_dim()));
        }
        if policy.num_actions() != self.num_actions() {
            return Err(Error::dim(self.num_actions(), policy.num_actions()));
        }
        Ok(())
    }

    fn classified(&self, state: &ReadingState<impl Scalar>) -> bool {
        state.y_hat.count() > 0
    }

    pub fn available_actions<F: Scalar>(&self, state: &ReadingState<F>) -> Result<Vec<TextAction>> {
        if state.terminal {
            return Err(Error::TerminalState);
        }
        let has_next = state.p < state.doc.len();
        let mut out = Vec::with_capacity(self.num_actions());
        match self.mode {
            LabelMode::Multi => {
                out.extend((0..self.num_labels).filter(|&k| !state.y_hat.get(k)).map(TextAction::Classify));
                if has_next {
                    out.push(TextAction::Next);
                }
                out.push(TextAction::Stop);
            }
            LabelMode::Mono if self.classified(state) => out.push(TextAction::Stop),
            LabelMode::Mono => {
                out.extend((0..self.num_labels).map(TextAction::Classify));
                if has_next {
                    out.push(TextAction::Next);
                }
            }
        }
        Ok(out)
    }

    pub fn transition<F: Scalar>(&self, state: &ReadingState<F>, action: TextAction) -> Result<ReadingState<F>> {
        if !self.available_actions(state)?.contains(&action) {
            return Err(Error::InvalidAction(format!("{action:?} not available at p={} y_hat={:?}", state.p, state.y_hat.bits)));
        }
        let mut next = state.clone();
        match action {
            TextAction::Classify(k) => next.y_hat.set(k),
            TextAction::Next => next.p += 1,
            TextAction::Stop => next.terminal = true,
        }
        Ok(next)
    }

    /// Terminal reward paid on `stop`; zero for every other action.
    pub fn reward<F: Scalar>(&self, state: &ReadingState<F>, action: TextAction, truth: &LabelVector) -> Result<F> {
        if action != TextAction::Stop {
            return Ok(F::zero());
        }
        match self.mode {
            LabelMode::Multi => f1_reward(truth, &state.y_hat),
            LabelMode::Mono => {
                if truth.count() == 0 {
                    return Err(Error::InvalidDataset("document has no true category".into()));
                }
                let chosen =
                    state.y_hat.ones().next().ok_or_else(|| Error::InvalidAction("mono-label stop before classification".into()))?;
                // Any of a document's categories counts as correct.
                Ok(if truth.get(chosen) { F::one() } else { F::zero() })
            }
        }
    }

    /// `(mean of sentences 1..=p, sentence p, y_hat)`.
    pub fn state_vector<F: Scalar>(&self, state: &ReadingState<F>) -> Result<Vec<F>> {
        let doc = &state.doc;
        if doc.vocab_dim() != self.vocab_dim {
            return Err(Error::dim(self.vocab_dim, doc.vocab_dim()));
        }
        if state.y_hat.len() != self.num_labels {
            return Err(Error::dim(self.num_labels, state.y_hat.len()));
        }
        if state.p == 0 || state.p > doc.len() {
            return Err(Error::InvalidArgument(format!("reading position {} outside 1..={}", state.p, doc.len())));
        }
        let v = self.vocab_dim;
        let mut phi = vec![F::zero(); self.block_dim()];
        for s in &doc.sentences[..state.p] {
            for (i, x) in s.iter() {
                phi[i] += x;
            }
        }
        let p = F::from_usize_lossy(state.p);
        for m in &mut phi[..v] {
            *m /= p;
        }
        for (i, x) in doc.sentences[state.p - 1].iter() {
            phi[v + i] = x;
        }
        for k in state.y_hat.ones() {
            phi[2 * v + k] = F::one();
        }
        Ok(phi)
    }

    pub fn featurize<F: Scalar>(&self, state: &ReadingState<F>, action: TextAction) -> Result<Featurized<F>> {
        let phi = self.state_vector(state)?;
        let id = self.action_id(action);
        if id.0 >= self.num_actions() {
            return Err(Error::InvalidAction(format!("action index {} out of range", id.0)));
        }
        Featurized::new(id.0 * self.block_dim(), phi, self.theta_dim())
    }

    /// Greedy reading from the first sentence with nothing assigned.
    pub fn classify_document<F: Scalar>(
        &self,
        policy: &LinearPolicy<F>,
        doc: &Arc<Document<F>>,
    ) -> Result<(LabelVector, usize, EpisodeTrace<F, ReadingState<F>>)> {
        self.check_policy(policy)?;
        let mdp = TextEpisode { model: self, truth: None };
        let trace = run_episode(&mdp, policy, ReadingState::initial(doc.clone(), self.num_labels), self.horizon_cap(doc), None)?;
        if trace.truncated {
            return Err(Error::Truncated(trace.actions.len()));
        }
        Ok((trace.final_state.y_hat.clone(), trace.final_state.p, trace))
    }

    pub fn episode<'a>(&'a self, truth: &'a LabelVector) -> TextEpisode<'a> {
        TextEpisode { model: self, truth: Some(truth) }
    }
}

/// The reading process for one document. Without known categories every
/// reward is zero.
#[derive(Clone, Copy, Debug)]
pub struct TextEpisode<'a> {
    model: &'a TextModel,
    truth: Option<&'a LabelVector>,
}

impl<F: Scalar> Mdp<F> for TextEpisode<'_> {
    type State = ReadingState<F>;
    type Action = TextAction;

    fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    fn theta_dim(&self) -> usize {
        self.model.theta_dim()
    }

    fn is_terminal(&self, state: &ReadingState<F>) -> bool {
        state.terminal
    }

    fn available_actions(&self, state: &ReadingState<F>) -> Result<Vec<TextAction>> {
        self.model.available_actions(state)
    }

    fn action_id(&self, action: TextAction) -> ActionId {
        self.model.action_id(action)
    }

    fn transition(&self, state: &ReadingState<F>, action: TextAction) -> Result<ReadingState<F>> {
        self.model.transition(state, action)
    }

    fn reward(&self, state: &ReadingState<F>, action: TextAction) -> Result<F> {
        match self.truth {
            Some(truth) => self.model.reward(state, action, truth),
            None => Ok(F::zero()),
        }
    }

    fn featurize(&self, state: &ReadingState<F>, action: TextAction) -> Result<Featurized<F>> {
        self.model.featurize(state, action)
    }

    fn effort(&self, state: &ReadingState<F>) -> usize {
        state.p
    }
}
