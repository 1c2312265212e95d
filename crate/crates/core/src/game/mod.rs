//! Time-dependent cooperative games over feature coalitions.

mod imputer;
mod predictor;
mod value;

pub use imputer::{conditional_gaussian_params, GaussianImputer, Imputer, MarginalImputer};
pub use predictor::{CoxPredictor, GroundTruthPredictor, Predictor};
pub use value::{
    evaluate_all_coalitions, exact_memory_estimate, CountingGame, FnGame, GameSetup, SurvivalGame,
    TableGame, TimeGame, ValueTable, DEFAULT_MEMORY_BUDGET,
};
