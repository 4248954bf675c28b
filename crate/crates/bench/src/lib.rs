//! Fixtures shared by the benchmarks.

use hawkesp::simulate::simulate_horizon;
use hawkesp::{EventSequence, HawkesModel};

pub fn set1_p2() -> HawkesModel {
    HawkesModel::new(0.5, &[0.00066, 100.0], &[0.001, 300.0]).expect("valid model")
}

pub fn set2() -> HawkesModel {
    HawkesModel::new(0.05, &[0.01761905, 0.28], &[0.04761905, 0.6666667]).expect("valid model")
}

pub fn sample(model: &HawkesModel, horizon: f64) -> EventSequence {
    simulate_horizon(model, horizon, 7).expect("simulation")
}
