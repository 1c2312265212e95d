//! Ground-truth hazard models and Cox regression.

mod cox;
pub mod quadrature;
mod risk;
mod truth;

pub use cox::{coxph_survival, fit_coxph, CoxModel};
pub use risk::{eval_risk_score, RiskScoreSpec, RiskTerm, TimeModifier, Transform};
pub use truth::{unit_profile, BaselineHazard, GroundTruthModel, ModelSpec, UnitProfile};
