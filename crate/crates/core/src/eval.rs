//! Metrics and sparsity/accuracy curves.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{L1LinearModel, MajorityClassifier};
use crate::data::{LabeledDocument, TabularDataset};
use crate::dwsc::{Classification, DwscModel, Featurization, RewardParams};
use crate::error::{Error, Result};
use crate::learner::{derive_seed, train, DwscDomain, IterationDiagnostics, RolloutConfig};
use crate::mdp::{ActionId, LinearPolicy};
use crate::scalar::Scalar;
use crate::text::{f1_reward, LabelMode, LabelVector, TextModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `1 - mean_features_used / n`.
    pub mean_sparsity: f64,
    pub mean_features_used: f64,
    /// Share of evaluated data that acquired each feature.
    pub feature_usage: Vec<f64>,
    /// Entry `k` counts data classified with exactly `k` features.
    pub features_used_histogram: Vec<usize>,
    pub per_label_f1: Option<Vec<f64>>,
    pub num_evaluated: usize,
}

impl EvalReport {
    /// Builds a report from `(predicted, true, features used)` triples.
    pub fn from_outcomes<'a>(
        num_features: usize,
        num_labels: usize,
        outcomes: impl IntoIterator<Item = (usize, usize, &'a [bool])>,
    ) -> Result<Self> {
        let mut correct = 0usize;
        let mut total_used = 0usize;
        let mut usage = vec![0usize; num_features];
        let mut histogram = vec![0usize; num_features + 1];
        let mut confusion = vec![(0usize, 0usize, 0usize); num_labels];
        let mut count = 0usize;
        for (pred, truth, used) in outcomes {
            if used.len() != num_features {
                return Err(Error::dim(num_features, used.len()));
            }
            if pred >= num_labels || truth >= num_labels {
                return Err(Error::InvalidArgument(format!("label outside 0..{num_labels}")));
            }
            count += 1;
            if pred == truth {
                correct += 1;
                confusion[pred].0 += 1;
            } else {
                confusion[pred].1 += 1;
                confusion[truth].2 += 1;
            }
            let k = used.iter().filter(|u| **u).count();
            total_used += k;
            histogram[k] += 1;
            for (u, &b) in usage.iter_mut().zip(used) {
                *u += usize::from(b);
            }
        }
        if count == 0 {
            return Err(Error::InvalidDataset("nothing to evaluate".into()));
        }
        let total = count as f64;
        let mean_features_used = total_used as f64 / total;
        let mean_sparsity = if num_features == 0 { 1.0 } else { 1.0 - mean_features_used / num_features as f64 };
        let per_label_f1 =
            confusion.iter().map(|&(tp, fp, fn_)| if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 }).collect();
        Ok(EvalReport {
            accuracy: correct as f64 / total,
            mean_sparsity,
            mean_features_used,
            feature_usage: usage.iter().map(|&u| u as f64 / total).collect(),
            features_used_histogram: histogram,
            per_label_f1: Some(per_label_f1),
            num_evaluated: count,
        })
    }
}

fn check_dims<F: Scalar>(n: usize, c: usize, test: &TabularDataset<F>) -> Result<()> {
    if test.num_features() != n {
        return Err(Error::dim(n, test.num_features()));
    }
    if test.num_classes() > c {
        return Err(Error::InvalidDataset(format!("test set has {} labels, model has {c}", test.num_classes())));
    }
    Ok(())
}

/// Greedy classification of every test datum.
pub fn evaluate_policy<F: Scalar>(
    model: &DwscModel<F>,
    policy: &LinearPolicy<F>,
    test: &TabularDataset<F>,
) -> Result<(EvalReport, Vec<Classification>)> {
    model.check_policy(policy)?;
    check_dims(model.num_features(), model.num_labels(), test)?;
    let results: Vec<Classification> = test.rows().par_iter().map(|r| model.classify(policy, &r.features)).collect::<Result<_>>()?;
    let masks: Vec<Vec<bool>> = results.iter().map(|c| (0..model.num_features()).map(|j| c.mask.contains(j)).collect()).collect();
    let report = EvalReport::from_outcomes(
        model.num_features(),
        model.num_labels(),
        results.iter().zip(test.rows()).zip(&masks).map(|((c, r), m)| (c.label, r.label, m.as_slice())),
    )?;
    Ok((report, results))
}

/// Every datum is charged the model's global support.
pub fn evaluate_l1<F: Scalar>(model: &L1LinearModel<F>, test: &TabularDataset<F>) -> Result<EvalReport> {
    check_dims(model.num_features(), model.weights.len(), test)?;
    let support = model.support();
    EvalReport::from_outcomes(
        model.num_features(),
        model.weights.len(),
        test.rows().iter().map(|r| (model.predict(&r.features), r.label, support.as_slice())),
    )
}

pub fn evaluate_majority<F: Scalar>(model: &MajorityClassifier, num_labels: usize, test: &TabularDataset<F>) -> Result<EvalReport> {
    let none = vec![false; test.num_features()];
    EvalReport::from_outcomes(
        test.num_features(),
        num_labels.max(model.label + 1),
        test.rows().iter().map(|r| (model.predict(&r.features), r.label, none.as_slice())),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextEvalReport {
    /// Exact-label accuracy (mono) or mean per-document F1 (multi).
    pub accuracy: f64,
    pub mean_sentences_read: f64,
    /// `1 - mean(sentences read / document length)`.
    pub mean_sparsity: f64,
    pub per_label_f1: Vec<f64>,
    pub num_evaluated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextPrediction {
    pub labels: LabelVector,
    pub sentences_read: usize,
    pub actions: Vec<ActionId>,
}

pub fn evaluate_text<F: Scalar>(
    model: &TextModel,
    policy: &LinearPolicy<F>,
    docs: &[LabeledDocument<F>],
) -> Result<(TextEvalReport, Vec<TextPrediction>)> {
    if docs.is_empty() {
        return Err(Error::InvalidDataset("nothing to evaluate".into()));
    }
    let preds: Vec<TextPrediction> = docs
        .par_iter()
        .map(|d| {
            if d.doc.vocab_dim() != model.vocab_dim() {
                return Err(Error::dim(model.vocab_dim(), d.doc.vocab_dim()));
            }
            let (labels, sentences_read, trace) = model.classify_document(policy, &d.doc)?;
            Ok(TextPrediction { labels, sentences_read, actions: trace.actions })
        })
        .collect::<Result<_>>()?;

    let c = model.num_labels();
    let mut score = 0.0;
    let mut read = 0.0;
    let mut read_frac = 0.0;
    let mut confusion = vec![(0usize, 0usize, 0usize); c];
    for (p, d) in preds.iter().zip(docs) {
        score += match model.mode() {
            LabelMode::Mono => f64::from(u8::from(p.labels.ones().next().is_some_and(|k| d.labels.get(k)))),
            LabelMode::Multi => f1_reward::<f64>(&d.labels, &p.labels)?,
        };
        read += p.sentences_read as f64;
        read_frac += p.sentences_read as f64 / d.doc.len() as f64;
        for (k, cell) in confusion.iter_mut().enumerate() {
            match (p.labels.get(k), d.labels.get(k)) {
                (true, true) => cell.0 += 1,
                (true, false) => cell.1 += 1,
                (false, true) => cell.2 += 1,
                (false, false) => {}
            }
        }
    }
    let total = docs.len() as f64;
    let report = TextEvalReport {
        accuracy: score / total,
        mean_sentences_read: read / total,
        mean_sparsity: 1.0 - read_frac / total,
        per_label_f1: confusion
            .iter()
            .map(|&(tp, fp, fn_)| if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 })
            .collect(),
        num_evaluated: docs.len(),
    };
    Ok((report, preds))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// The sweep parameter: `lambda` for policies, L1 strength for baselines.
    pub lambda: f64,
    pub sparsity: f64,
    pub accuracy: f64,
}

/// Points sorted by sparsity, one per distinct sparsity value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparsityAccuracyCurve {
    pub points: Vec<CurvePoint>,
    /// Points that shared a sparsity value with a more accurate one.
    pub dropped: Vec<CurvePoint>,
}

impl SparsityAccuracyCurve {
    pub fn from_points(mut points: Vec<CurvePoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(&p.sparsity) || !p.accuracy.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad curve point {p:?}")));
        }
        points
            .sort_by(|a, b| a.sparsity.total_cmp(&b.sparsity).then(b.accuracy.total_cmp(&a.accuracy)).then(a.lambda.total_cmp(&b.lambda)));
        let mut kept: Vec<CurvePoint> = Vec::with_capacity(points.len());
        let mut dropped = Vec::new();
        for p in points {
            match kept.last() {
                Some(last) if last.sparsity == p.sparsity => dropped.push(p),
                _ => kept.push(p),
            }
        }
        Ok(SparsityAccuracyCurve { points: kept, dropped })
    }

    pub fn is_interpolable(&self) -> bool {
        self.points.len() >= 2
    }

    /// Piecewise-linear accuracy at `target`; no extrapolation.
    pub fn accuracy_at_sparsity(&self, target: f64) -> Result<f64> {
        if !self.is_interpolable() {
            return Err(Error::InvalidArgument(format!("curve has {} point(s), need at least 2", self.points.len())));
        }
        let min = self.points[0].sparsity;
        let max = self.points[self.points.len() - 1].sparsity;
        if !(min..=max).contains(&target) {
            return Err(Error::OutOfRange { target, min, max });
        }
        if let Some(p) = self.points.iter().find(|p| p.sparsity == target) {
            return Ok(p.accuracy);
        }
        let hi = self.points.iter().position(|p| p.sparsity > target).expect("target below max");
        let (a, b) = (self.points[hi - 1], self.points[hi]);
        let t = (target - a.sparsity) / (b.sparsity - a.sparsity);
        Ok(a.accuracy + t * (b.accuracy - a.accuracy))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,sparsity,accuracy\n");
        for p in &self.dropped {
            let _ = writeln!(out, "# dropped duplicate sparsity: {},{},{}", p.lambda, p.sparsity, p.accuracy);
        }
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.lambda, p.sparsity, p.accuracy);
        }
        out
    }

    /// Reads the CSV written by [`Self::to_csv`]; comment lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut header = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header {
                if line != "lambda,sparsity,accuracy" {
                    return Err(Error::Parse { line: i + 1, message: format!("unexpected header `{line}`") });
                }
                header = true;
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            let [lambda, sparsity, accuracy] = fields[..] else {
                return Err(Error::Parse { line: i + 1, message: "expected 3 fields".into() });
            };
            points.push(CurvePoint { lambda, sparsity, accuracy });
        }
        if !header {
            return Err(Error::InvalidDataset("missing curve header".into()));
        }
        Self::from_points(points)
    }
}

/// Interpolated accuracy per target; `None` where the curve does not reach.
pub fn accuracy_table(curve: &SparsityAccuracyCurve, targets: &[f64]) -> Vec<Option<f64>> {
    targets.iter().map(|&t| curve.accuracy_at_sparsity(t).ok()).collect()
}

/// Averages raw sweeps point-by-point (same grid order), then interpolates.
pub fn average_then_interpolate(sweeps: &[Vec<CurvePoint>], targets: &[f64]) -> Result<Vec<Option<f64>>> {
    let first = sweeps.first().ok_or_else(|| Error::InvalidArgument("no curves to average".into()))?;
    if sweeps.iter().any(|s| s.len() != first.len()) {
        return Err(Error::InvalidArgument("curves to average differ in length".into()));
    }
    let k = sweeps.len() as f64;
    let mean: Vec<CurvePoint> = (0..first.len())
        .map(|i| CurvePoint {
            lambda: first[i].lambda,
            sparsity: sweeps.iter().map(|s| s[i].sparsity).sum::<f64>() / k,
            accuracy: sweeps.iter().map(|s| s[i].accuracy).sum::<f64>() / k,
        })
        .collect();
    Ok(accuracy_table(&SparsityAccuracyCurve::from_points(mean)?, targets))
}

/// Interpolates each curve, then averages; a target missed by any curve is `None`.
pub fn interpolate_then_average(curves: &[SparsityAccuracyCurve], targets: &[f64]) -> Vec<Option<f64>> {
    let tables: Vec<Vec<Option<f64>>> = curves.iter().map(|c| accuracy_table(c, targets)).collect();
    (0..targets.len())
        .map(|i| {
            let vals: Option<Vec<f64>> = tables.iter().map(|t| t[i]).collect();
            vals.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SweepCell<F> {
    pub lambda: f64,
    pub seed: u64,
    pub policy: LinearPolicy<F>,
    pub report: EvalReport,
    pub diagnostics: Vec<IterationDiagnostics>,
}

#[derive(Clone, Debug)]
pub struct Sweep<F> {
    pub curve: SparsityAccuracyCurve,
    pub cells: Vec<SweepCell<F>>,
}

impl<F> Sweep<F> {
    /// One point per grid entry, in grid order, before de-duplication.
    pub fn raw_points(&self) -> Vec<CurvePoint> {
        self.cells.iter().map(|c| CurvePoint { lambda: c.lambda, sparsity: c.report.mean_sparsity, accuracy: c.report.accuracy }).collect()
    }
}

/// Trains and evaluates one policy per `lambda`; cell `i` trains with seed
/// `derive_seed(config.seed, i)`.
pub fn sweep_lambda<F: Scalar>(
    train_set: &TabularDataset<F>,
    test_set: &TabularDataset<F>,
    lambda_grid: &[f64],
    config: &RolloutConfig,
    featurization: Featurization,
) -> Result<Sweep<F>> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let c = train_set.num_classes().max(test_set.num_classes());
    let cells: Vec<SweepCell<F>> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let model = DwscModel::new(train_set.num_features(), c, featurization, RewardParams::new(F::lit(lambda))?)?;
            let seed = derive_seed(config.seed, i as u64);
            let cfg = RolloutConfig { seed, ..config.clone() };
            let outcome = train(&DwscDomain::new(&model, train_set)?, &cfg)?;
            let (report, _) = evaluate_policy(&model, &outcome.policy, test_set)?;
            Ok(SweepCell { lambda, seed, policy: outcome.policy, report, diagnostics: outcome.diagnostics })
        })
        .collect::<Result<_>>()?;
    let points =
        cells.iter().map(|c| CurvePoint { lambda: c.lambda, sparsity: c.report.mean_sparsity, accuracy: c.report.accuracy }).collect();
    let curve = SparsityAccuracyCurve::from_points(points)?;
    if !curve.is_interpolable() {
        log::warn!("sweep produced {} distinct sparsity value(s); the curve cannot be interpolated", curve.points.len());
    }
    Ok(Sweep { curve, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lambda: f64, sparsity: f64, accuracy: f64) -> CurvePoint {
        CurvePoint { lambda, sparsity, accuracy }
    }

    #[test]
    fn interpolation_examples() {
        let curve = SparsityAccuracyCurve::from_points(vec![pt(0.1, 0.8, 0.6), pt(0.01, 0.4, 0.8)]).unwrap();
        assert!((curve.accuracy_at_sparsity(0.6).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(curve.accuracy_at_sparsity(0.4).unwrap(), 0.8);
        assert_eq!(curve.accuracy_at_sparsity(0.8).unwrap(), 0.6);
        assert!(matches!(curve.accuracy_at_sparsity(0.9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn single_point_is_flagged() {
        let curve = SparsityAccuracyCurve::from_points(vec![pt(0.0, 0.5, 0.9)]).unwrap();
        assert!(!curve.is_interpolable());
        assert!(matches!(curve.accuracy_at_sparsity(0.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn duplicate_sparsity_keeps_best() {
        let curve = SparsityAccuracyCurve::from_points(vec![pt(0.1, 0.5, 0.7), pt(0.2, 0.5, 0.9), pt(0.3, 0.8, 0.6)]).unwrap();
        assert_eq!(curve.points, vec![pt(0.2, 0.5, 0.9), pt(0.3, 0.8, 0.6)]);
        assert_eq!(curve.dropped, vec![pt(0.1, 0.5, 0.7)]);
        let csv = curve.to_csv();
        assert!(csv.starts_with("lambda,sparsity,accuracy\n# dropped"));
        assert_eq!(SparsityAccuracyCurve::from_csv(&csv).unwrap().points, curve.points);
    }

    #[test]
    fn report_identities() {
        let used = [vec![true, false, false], vec![true, true, true], vec![false; 3]];
        let r = EvalReport::from_outcomes(3, 2, [(0, 0, &used[0][..]), (1, 0, &used[1][..]), (1, 1, &used[2][..])]).unwrap();
        assert_eq!(r.mean_features_used, 4.0 / 3.0);
        assert_eq!(r.mean_sparsity, 1.0 - r.mean_features_used / 3.0);
        assert_eq!(r.features_used_histogram, vec![1, 1, 0, 1]);
        assert_eq!(r.feature_usage, vec![2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn immediate_and_full_policies() {
        let data = TabularDataset::from_dense(vec![vec![0.2, 0.4, 0.9], vec![0.7, 0.1, 0.3]], vec![0, 1]).unwrap();
        let model = DwscModel::new(3, 2, Featurization::Unconstrained, RewardParams::new(0.01).unwrap()).unwrap();
        let mut b = vec![0.0; model.num_actions()];
        b[3] = 1.0;
        let stop = LinearPolicy::with_intercepts(vec![0.0; model.theta_dim()], b, model.block_dim(), model.num_actions()).unwrap();
        let (r, _) = evaluate_policy(&model, &stop, &data).unwrap();
        assert_eq!((r.mean_sparsity, r.mean_features_used), (1.0, 0.0));

        let mut b = vec![0.0; model.num_actions()];
        b[..3].copy_from_slice(&[3.0, 2.0, 1.0]);
        let greedy_all = LinearPolicy::with_intercepts(vec![0.0; model.theta_dim()], b, model.block_dim(), model.num_actions()).unwrap();
        let (r, results) = evaluate_policy(&model, &greedy_all, &data).unwrap();
        assert_eq!(r.mean_sparsity, 0.0);
        assert_eq!(r.feature_usage, vec![1.0; 3]);
        assert_eq!(results[0].actions, vec![ActionId(0), ActionId(1), ActionId(2), ActionId(3)]);
    }

    #[test]
    fn l1_charges_global_support() {
        let data = TabularDataset::from_dense(vec![vec![0.2, 0.4, 0.9], vec![0.7, 0.1, 0.3]], vec![0, 1]).unwrap();
        let m = L1LinearModel { weights: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 2.0]], bias: vec![0.0, 0.0], l1_strength: 0.1 };
        let r = evaluate_l1(&m, &data).unwrap();
        assert_eq!(r.feature_usage, vec![1.0, 0.0, 1.0]);
        assert_eq!(r.features_used_histogram, vec![0, 0, 2, 0]);
    }

    #[test]
    fn averaging_orders() {
        let a = vec![pt(0.1, 0.2, 0.9), pt(1.0, 0.8, 0.5)];
        let b = vec![pt(0.1, 0.4, 0.7), pt(1.0, 1.0, 0.3)];
        let before = average_then_interpolate(&[a.clone(), b.clone()], &[0.6]).unwrap();
        assert!((before[0].unwrap() - 0.6).abs() < 1e-12);
        let curves: Vec<_> = [a, b].into_iter().map(|p| SparsityAccuracyCurve::from_points(p).unwrap()).collect();
        let after = interpolate_then_average(&curves, &[0.6, 0.9]);
        let expected = ((0.9 - 0.4 * 2.0 / 3.0) + (0.7 - 0.4 / 3.0)) / 2.0;
        assert!((after[0].unwrap() - expected).abs() < 1e-12);
        assert_eq!(after[1], None);
    }

    proptest! {
        #[test]
        fn interpolation_exact_on_knots_and_monotone_between(
            raw in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2..8),
            t in 0.0f64..1.0,
        ) {
            let curve = SparsityAccuracyCurve::from_points(raw.iter().enumerate().map(|(i, &(s, a))| pt(i as f64, s, a)).collect()).unwrap();
            prop_assume!(curve.is_interpolable());
            for p in &curve.points {
                prop_assert_eq!(curve.accuracy_at_sparsity(p.sparsity).unwrap(), p.accuracy);
            }
            for w in curve.points.windows(2) {
                let s = w[0].sparsity + t * (w[1].sparsity - w[0].sparsity);
                let v = curve.accuracy_at_sparsity(s).unwrap();
                let (lo, hi) = (w[0].accuracy.min(w[1].accuracy), w[0].accuracy.max(w[1].accuracy));
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
