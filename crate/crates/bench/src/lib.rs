//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use survint::game::{evaluate_all_coalitions, GameSetup, GroundTruthPredictor, Imputer, ValueTable, DEFAULT_MEMORY_BUDGET};
use survint::simulate::{build_scenario, simulate_dataset, with_inert_features, FeatureSampler, ScenarioId, SimulationConfig, T_MAX};
use survint::{build_time_grid, GridMode, PredictionTarget, SurvivalDataset};

/// Ground-truth game of scenario 8 padded to `p` features.
pub fn setup(p: usize, target: PredictionTarget, background: usize, n_times: usize) -> GameSetup {
    let model = with_inert_features(&build_scenario(ScenarioId::Numbered(8)).unwrap(), p).unwrap();
    let grid = build_time_grid(T_MAX, n_times, GridMode::Even).unwrap();
    let rows = FeatureSampler::equicorrelated(p, 0.0, 11).unwrap().sample(background);
    let pred = GroundTruthPredictor::new(model, target, grid).unwrap();
    GameSetup::new(Arc::new(pred), Arc::new(Imputer::marginal(p, rows).unwrap())).unwrap()
}

pub fn instance(p: usize) -> Vec<f64> {
    FeatureSampler::equicorrelated(p, 0.0, 12).unwrap().sample_row(0)
}

pub fn table(p: usize, n_times: usize) -> ValueTable {
    let s = setup(p, PredictionTarget::Survival, 100, n_times);
    evaluate_all_coalitions(&s.game(&instance(p)).unwrap(), DEFAULT_MEMORY_BUDGET).unwrap()
}

pub fn dataset(n: usize) -> SurvivalDataset {
    simulate_dataset(&SimulationConfig {
        n,
        ..SimulationConfig::new(ScenarioId::Numbered(1), 3)
    })
    .unwrap()
    .dataset
}
