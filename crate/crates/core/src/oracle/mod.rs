//! Independent reference solutions: particle characteristics, monotone
//! rearrangement on the line, single-particle optimal control, and a small
//! occupation-measure linear program.

pub mod characteristic;
pub mod lp;
pub mod quantile;
pub mod simplex;
pub mod transcription;

pub use characteristic::{characteristic_solve, integrate, ParticleState};
pub use lp::{action_grid, build_lp, solve_lp, Action, DiscreteRelaxedMeasure, LpProblem, LpSolution};
pub use quantile::quantile_ot_1d;
pub use simplex::LpStatus;
pub use transcription::dirac_pair_cost;
