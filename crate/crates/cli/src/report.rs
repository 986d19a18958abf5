//! The `report` subcommand: interpolated accuracy at fixed sparsity levels,
//! per training-set size, for the sweep and the L1 baseline.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use seqclass::eval::{average_then_interpolate, interpolate_then_average, sweep_lambda, CurvePoint, SparsityAccuracyCurve};

use crate::{
    check_grid, featurization, l1_points, load_tabular, prepare, repeat_seed, usage, write_output, DiagnosticsSink, ReportArgs, TARGETS,
};

struct Runs {
    raw: Vec<Vec<CurvePoint>>,
    curves: Vec<SparsityAccuracyCurve>,
}

impl Runs {
    fn new() -> Self {
        Runs { raw: Vec::new(), curves: Vec::new() }
    }

    fn push(&mut self, points: Vec<CurvePoint>) -> Result<()> {
        self.curves.push(SparsityAccuracyCurve::from_points(points.clone())?);
        self.raw.push(points);
        Ok(())
    }
}

fn cells(values: &[Option<f64>]) -> String {
    values.iter().map(|v| v.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"))).collect::<Vec<_>>().join("\t")
}

pub(crate) fn run(a: ReportArgs) -> Result<()> {
    check_grid("lambda-grid", &a.lambda_grid)?;
    check_grid("l1-grid", &a.l1_grid)?;
    if a.repeats == 0 {
        bail!(usage("--repeats must be at least 1"));
    }
    if a.train_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        bail!(usage("--train-fractions must lie strictly between 0 and 1"));
    }
    let data = load_tabular(&a.data)?;
    let mut sink = DiagnosticsSink::new(a.learner.diagnostics.as_deref());

    let mut table = String::from("# accuracy interpolated at fixed sparsity; NA: target outside the curve\n");
    let header: Vec<String> = TARGETS.iter().map(|t| format!("sparsity={t}")).collect();
    writeln!(table, "method\ttrain_fraction\taveraging\t{}", header.join("\t"))?;

    for &fraction in &a.train_fractions {
        let mut policy_runs = Runs::new();
        let mut l1_runs = Runs::new();
        for r in 0..a.repeats {
            let seed = repeat_seed(a.seed, r);
            let (train_set, test_set, _) = prepare(&data, fraction, seed)?;
            let sweep = sweep_lambda(&train_set, &test_set, &a.lambda_grid, &a.learner.config(seed), featurization(a.constrained))?;
            for cell in &sweep.cells {
                sink.push(&cell.diagnostics, serde_json::json!({ "train_fraction": fraction, "lambda": cell.lambda, "repeat": r }))?;
            }
            policy_runs.push(sweep.raw_points())?;
            l1_runs.push(l1_points(&train_set, &test_set, &a.l1_grid, 2000)?)?;
        }
        for (method, runs) in [("dwsm", &policy_runs), ("l1", &l1_runs)] {
            let ati = average_then_interpolate(&runs.raw, &TARGETS)?;
            let ita = interpolate_then_average(&runs.curves, &TARGETS);
            writeln!(table, "{method}\t{fraction}\taverage-then-interpolate\t{}", cells(&ati))?;
            writeln!(table, "{method}\t{fraction}\tinterpolate-then-average\t{}", cells(&ita))?;
        }
    }
    sink.finish()?;
    write_output(a.out.as_deref(), &table)
}
