//! Reference models for the sparsity/accuracy comparison.
//!
//! [`train_l1`] fits one-vs-all L1-penalized logistic regressions by proximal
//! gradient with backtracking; the bias is not penalized. Its sparsity is
//! global: a feature counts as used when any class weight on it is nonzero.

use rayon::prelude::*;

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// `sign(w) * max(|w| - threshold, 0)`.
pub fn soft_threshold<F: Scalar>(w: F, threshold: F) -> F {
    if w > threshold {
        w - threshold
    } else if w < -threshold {
        w + threshold
    } else {
        F::zero()
    }
}

fn log1p_exp<F: Scalar>(t: F) -> F {
    if t > F::zero() {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid<F: Scalar>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}

/// One binary problem: weights, bias and the penalized objective after every
/// accepted step.
#[derive(Clone, Debug)]
pub struct BinaryFit<F> {
    pub weights: Vec<F>,
    pub bias: F,
    pub objective_trace: Vec<F>,
    pub converged: bool,
}

fn logistic_loss<F: Scalar>(xs: &[&[F]], signs: &[F], w: &[F], b: F) -> F {
    let n = F::from_usize_lossy(xs.len());
    xs.iter().zip(signs).map(|(x, &s)| log1p_exp(-s * (dot(x, w) + b))).sum::<F>() / n
}

fn logistic_grad<F: Scalar>(xs: &[&[F]], signs: &[F], w: &[F], b: F) -> (Vec<F>, F) {
    let n = F::from_usize_lossy(xs.len());
    let mut gw = vec![F::zero(); w.len()];
    let mut gb = F::zero();
    for (x, &s) in xs.iter().zip(signs) {
        let coef = -s * sigmoid(-s * (dot(x, w) + b)) / n;
        for (g, &v) in gw.iter_mut().zip(x.iter()) {
            *g += coef * v;
        }
        gb += coef;
    }
    (gw, gb)
}

/// Minimizes `mean logistic loss + l1 * |w|_1` for targets in {false, true}.
pub fn fit_binary_l1<F: Scalar>(xs: &[&[F]], targets: &[bool], l1: F, max_iters: usize, tol: F) -> Result<BinaryFit<F>> {
    if xs.is_empty() {
        return Err(Error::InvalidDataset("no training rows".into()));
    }
    let n = xs[0].len();
    let signs: Vec<F> = targets.iter().map(|&t| if t { F::one() } else { -F::one() }).collect();
    let penalty = |w: &[F]| l1 * w.iter().map(|v| v.abs()).sum::<F>();

    let mut w = vec![F::zero(); n];
    let mut b = F::zero();
    let mut step = F::one();
    let mut loss = logistic_loss(xs, &signs, &w, b);
    let mut objective_trace = vec![loss + penalty(&w)];
    let mut converged = false;

    for _ in 0..max_iters {
        if !loss.is_finite() {
            return Err(Error::NumericalFailure("non-finite logistic loss".into()));
        }
        let (gw, gb) = logistic_grad(xs, &signs, &w, b);
        let (w_next, b_next, loss_next, dist2) = loop {
            let w_try: Vec<F> = w.iter().zip(&gw).map(|(&wi, &gi)| soft_threshold(wi - step * gi, step * l1)).collect();
            let b_try = b - step * gb;
            let loss_try = logistic_loss(xs, &signs, &w_try, b_try);
            let mut lin = (b_try - b) * gb;
            let mut dist2 = (b_try - b) * (b_try - b);
            for ((&wt, &wi), &gi) in w_try.iter().zip(&w).zip(&gw) {
                lin += (wt - wi) * gi;
                dist2 += (wt - wi) * (wt - wi);
            }
            if loss_try <= loss + lin + dist2 / (F::lit(2.0) * step) || step < F::lit(1e-12) {
                break (w_try, b_try, loss_try, dist2);
            }
            step *= F::lit(0.5);
        };
        if !loss_next.is_finite() {
            return Err(Error::NumericalFailure("non-finite logistic loss".into()));
        }
        let grad_map = dist2.sqrt() / step;
        w = w_next;
        b = b_next;
        loss = loss_next;
        objective_trace.push(loss + penalty(&w));
        if grad_map <= tol {
            converged = true;
            break;
        }
        step *= F::lit(2.0);
    }
    Ok(BinaryFit { weights: w, bias: b, objective_trace, converged })
}

/// One-vs-all linear classifier with an L1-sparse weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct L1LinearModel<F> {
    /// `C x n`.
    pub weights: Vec<Vec<F>>,
    pub bias: Vec<F>,
    pub l1_strength: F,
}

impl<F: Scalar> L1LinearModel<F> {
    pub fn num_features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn predict(&self, x: &[F]) -> usize {
        let mut best = 0;
        let mut best_score = F::neg_infinity();
        for (k, (w, &b)) in self.weights.iter().zip(&self.bias).enumerate() {
            let s = dot(w, x) + b;
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        best
    }

    /// Features with a nonzero weight in at least one class.
    pub fn support(&self) -> Vec<bool> {
        (0..self.num_features()).map(|j| self.weights.iter().any(|row| row[j] != F::zero())).collect()
    }
}

pub fn train_l1<F: Scalar>(train: &TabularDataset<F>, l1_strength: F, max_iters: usize, tol: F) -> Result<L1LinearModel<F>> {
    if train.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    if !l1_strength.is_finite() || l1_strength < F::zero() {
        return Err(Error::InvalidArgument(format!("l1 strength must be non-negative, got {l1_strength}")));
    }
    let xs: Vec<&[F]> = train.rows().iter().map(|r| &*r.features).collect();
    let fits: Vec<BinaryFit<F>> = (0..train.num_classes().max(1))
        .into_par_iter()
        .map(|k| {
            let targets: Vec<bool> = train.rows().iter().map(|r| r.label == k).collect();
            fit_binary_l1(&xs, &targets, l1_strength, max_iters, tol)
        })
        .collect::<Result<_>>()?;
    let (weights, bias) = fits.into_iter().map(|f| (f.weights, f.bias)).unzip();
    Ok(L1LinearModel { weights, bias, l1_strength })
}

/// Fraction of features unused by every class.
pub fn model_sparsity<F: Scalar>(model: &L1LinearModel<F>) -> f64 {
    let n = model.num_features();
    if n == 0 {
        return 1.0;
    }
    model.support().iter().filter(|used| !**used).count() as f64 / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MajorityClassifier {
    pub label: usize,
}

impl MajorityClassifier {
    pub fn predict<F>(&self, _x: &[F]) -> usize {
        self.label
    }
}

/// Most frequent training label; ties go to the smallest label.
pub fn majority_baseline<F: Scalar>(train: &TabularDataset<F>) -> Result<MajorityClassifier> {
    if train.is_empty() {
        return Err(Error::InvalidDataset("training set is empty".into()));
    }
    let mut counts = vec![0usize; train.num_classes().max(1)];
    for y in train.labels() {
        counts[y] += 1;
    }
    let mut label = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[label] {
            label = k;
        }
    }
    Ok(MajorityClassifier { label })
}
