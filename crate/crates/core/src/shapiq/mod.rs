//! Exact and budgeted Shapley interaction values of time-indexed games.

mod approx;
mod exact;
mod sampler;

pub use approx::{
    approx_montecarlo, approx_permutation, approx_regression, approximate, ApproxMethod, ApproximatorConfig,
    Diagnostics, Estimate, REGRESSION_RIDGE,
};
pub use exact::{
    aggregate_ksii, bernoulli_numbers, discrete_derivative, exact_ksii, exact_sii, moebius_transform, sii_weight,
    InteractionValues, MoebiusCoefficients,
};
pub use sampler::{coalitions_of_size, CoalitionSample};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::explanation::InteractionExplanation;
use crate::game::{evaluate_all_coalitions, SurvivalGame, TimeGame, DEFAULT_MEMORY_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Exact,
    Approximate(ApproximatorConfig),
}

/// k-SII values of any time game, exactly or within a budget.
pub fn explain_game(game: &dyn TimeGame, k: usize, method: &Method) -> Result<Estimate> {
    match method {
        Method::Exact => {
            let p = game.n_players();
            let table = evaluate_all_coalitions(game, DEFAULT_MEMORY_BUDGET)?;
            Ok(Estimate {
                values: exact_ksii(&table, k)?,
                diagnostics: Diagnostics {
                    evaluations: 1 << p,
                    exhaustive: true,
                    ..Diagnostics::default()
                },
            })
        }
        Method::Approximate(cfg) => approximate(game, k, cfg),
    }
}

/// Explains one instance: attributions over the game's grid together with the
/// background mean prediction.
pub fn explain(game: &SurvivalGame<'_>, k: usize, method: &Method) -> Result<(InteractionExplanation, Diagnostics)> {
    let est = explain_game(game, k, method)?;
    let explanation = InteractionExplanation::new(
        k,
        game.setup().predictor().target(),
        game.grid().clone(),
        game.baseline().to_vec(),
        est.values,
    )?;
    Ok((explanation, est.diagnostics))
}
