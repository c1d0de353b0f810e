//! Sampled environments, tabular learners and the shaped-versus-unshaped
//! learning comparison.

pub mod agent;
pub mod env;
pub mod experiment;
pub mod soccer;

pub use agent::{q_update, IndependentQ, Learner, MinimaxQ, Schedule};
pub use env::{
    repeated_matrix_env, Environment, ModelEnvironment, RepeatedMatrixEnvironment,
    ShapedEnvironment, TrialRng,
};
pub use experiment::{
    run_comparison, run_trial, solver_potential, AgentKind, Arm, ArmSummary, Comparison,
    ComparisonResult, ComparisonSettings, ComparisonSummary, CurveRecord, LearningCurve,
};
pub use soccer::{grid_soccer, SoccerEnvironment, SoccerStart};
