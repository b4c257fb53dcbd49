#![allow(dead_code)]

use std::sync::OnceLock;

use holoworld::gridworld::{enumerate_transitions, zero_shot_split, DatasetSplit, GridSpec};
use holoworld::harness::FhrrModel;
use holoworld::training::{train, LossWeights, TrainConfig};

pub struct Trained {
    pub split: DatasetSplit,
    pub model: FhrrModel,
    pub totals: Vec<f64>,
}

/// Default-config FHRR model on the default 20% split, trained once per seed
/// per test binary.
pub fn fhrr(seed: u64) -> &'static Trained {
    static CELLS: [OnceLock<Trained>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CELLS[seed as usize].get_or_init(|| {
        let g = GridSpec::default();
        let split = zero_shot_split(&enumerate_transitions(&g), 0.2, seed).unwrap();
        let t = train(&split, &g, &TrainConfig { seed, ..Default::default() }, &LossWeights::default()).unwrap();
        Trained {
            model: FhrrModel::new(t.states, t.actions).unwrap(),
            totals: t.report.totals(),
            split,
        }
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
