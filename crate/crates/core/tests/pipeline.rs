use seqclass::data::normalize_features;
use seqclass::dwsc::{DwscModel, Featurization, RewardParams};
use seqclass::eval::{evaluate_policy, sweep_lambda, SparsityAccuracyCurve};
use seqclass::learner::{train, DwscDomain, RolloutConfig};
use seqclass::model_io::{sidecar_path, ModelKind, SavedModel};
use seqclass::synthetic::{two_subspace, NUM_FEATURES};

fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let var = |r: &[f64]| r.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let denom = (var(&ra) * var(&rb)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        cov / denom
    }
}

#[test]
fn spearman_oracle_sanity() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
}

#[test]
fn sparsity_grows_with_lambda() {
    let grid = [0.001, 0.01, 0.1];
    for seed in 0..3 {
        let data = two_subspace(300, seed).unwrap();
        let (train_set, test_set) = data.split(0.5, seed).unwrap();
        let (train_set, record) = normalize_features(&train_set).unwrap();
        let test_set = record.apply(&test_set).unwrap();
        let config = RolloutConfig { seed, ..RolloutConfig::default() };
        let sweep = sweep_lambda(&train_set, &test_set, &grid, &config, Featurization::Unconstrained).unwrap();
        let points = sweep.raw_points();
        let lambdas: Vec<f64> = points.iter().map(|p| p.lambda).collect();
        let sparsity: Vec<f64> = points.iter().map(|p| p.sparsity).collect();
        let rho = spearman(&lambdas, &sparsity);
        assert!(rho >= 0.5, "seed {seed}: rho {rho} for {points:?}");

        let csv = sweep.curve.to_csv();
        assert_eq!(SparsityAccuracyCurve::from_csv(&csv).unwrap().to_csv(), csv);
    }
}

#[test]
fn saved_model_reproduces_traces() {
    let data = two_subspace(200, 8).unwrap();
    let (train_set, test_set) = data.split(0.5, 8).unwrap();
    let (train_set, record) = normalize_features(&train_set).unwrap();
    let model = DwscModel::new(NUM_FEATURES, 2, Featurization::Constrained, RewardParams::new(0.05).unwrap()).unwrap();
    let config = RolloutConfig { num_states: 400, iterations: 3, seed: 8, ..RolloutConfig::default() };
    let policy = train(&DwscDomain::new(&model, &train_set).unwrap(), &config).unwrap().policy;

    let saved = SavedModel {
        kind: ModelKind::Dwsc { n: NUM_FEATURES, c: 2, featurization: Featurization::Constrained },
        policy: policy.clone(),
        lambda: 0.05,
        scaling: Some(record.clone()),
        vocabulary: None,
        label_names: train_set.label_names().to_vec(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.sqcm");
    saved.save(&path, &serde_json::json!({ "seed": 8 })).unwrap();
    assert!(sidecar_path(&path).exists());
    let loaded = SavedModel::load(&path).unwrap();
    assert_eq!(loaded.to_bytes(), saved.to_bytes());

    let test_set = record.apply(&test_set).unwrap();
    let reloaded_test = loaded.scaling.as_ref().unwrap().apply(&data.split(0.5, 8).unwrap().1).unwrap();
    let (_, before) = evaluate_policy(&model, &policy, &test_set).unwrap();
    let (_, after) = evaluate_policy(&loaded.dwsc_model().unwrap(), &loaded.policy, &reloaded_test).unwrap();
    assert_eq!(before, after);
}
