//! Time-indexed Shapley interaction attributions for survival models.

pub mod benchmark;
pub mod coalition;
pub mod data;
pub mod error;
pub mod explanation;
pub mod game;
pub mod grid;
pub mod metrics;
pub mod rng;
pub mod shapiq;
pub mod simulate;
pub mod survmodel;
pub mod validation;

pub use coalition::{binom, coalition_iter, count_up_to, Coalition, MAX_EXACT_PLAYERS, MAX_PLAYERS};
pub use data::SurvivalDataset;
pub use error::{Error, Result};
pub use explanation::{InteractionExplanation, PredictionTarget};
pub use grid::{build_time_grid, GridMode, TimeGrid};
pub use survmodel::{
    coxph_survival, eval_risk_score, fit_coxph, CoxModel, GroundTruthModel, RiskScoreSpec, RiskTerm,
    TimeModifier, Transform,
};
