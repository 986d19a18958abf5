//! A two-subspace dataset where each input needs a different pair of features.
//!
//! Six features in `[0, 1]`. Feature [`ROUTER`] puts a point in subspace A
//! (`< 0.4`) or B (`> 0.6`). In A the label is `x[0] > 0.5`, in B it is
//! `x[3] > 0.5`; the deciding feature keeps a 0.2-wide gap around the
//! threshold. The other features are uniform noise. A label is then a
//! multiplexer of three features, so no global set of at most three features
//! is linearly separable, while two well-chosen features per input suffice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::TabularDataset;
use crate::error::Result;

pub const NUM_FEATURES: usize = 6;
pub const ROUTER: usize = 1;
pub const DECIDER_A: usize = 0;
pub const DECIDER_B: usize = 3;

fn away_from_middle(rng: &mut ChaCha8Rng, high: bool) -> f64 {
    let v = rng.gen_range(0.0..0.4);
    if high {
        1.0 - v
    } else {
        v
    }
}

pub fn two_subspace(num_points: usize, seed: u64) -> Result<TabularDataset<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(num_points);
    let mut ys = Vec::with_capacity(num_points);
    for _ in 0..num_points {
        let mut x: Vec<f64> = (0..NUM_FEATURES).map(|_| rng.gen_range(0.0..1.0)).collect();
        let in_b = rng.gen_bool(0.5);
        let label = rng.gen_bool(0.5);
        x[ROUTER] = away_from_middle(&mut rng, in_b);
        let decider = if in_b { DECIDER_B } else { DECIDER_A };
        x[decider] = away_from_middle(&mut rng, label);
        xs.push(x);
        ys.push(usize::from(label));
    }
    TabularDataset::from_dense(xs, ys)?.with_label_names(vec!["0".into(), "1".into()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_deciding_feature() {
        let d = two_subspace(400, 7).unwrap();
        assert_eq!(d.len(), 400);
        assert_eq!(d.num_features(), NUM_FEATURES);
        for r in d.rows() {
            let x = &r.features;
            let decider = if x[ROUTER] > 0.5 { DECIDER_B } else { DECIDER_A };
            assert_eq!(r.label, usize::from(x[decider] > 0.5));
            assert!((x[ROUTER] - 0.5).abs() > 0.1 && (x[decider] - 0.5).abs() > 0.1);
        }
        assert_eq!(two_subspace(400, 7).unwrap(), d);
    }
}
