//! Local models: design sets, diagonal-Hessian quadratic interpolation and
//! the trust-region subproblem.

mod design;
mod interp;
mod subproblem;

pub use design::{
    direction_singular_min, select_hf_design_set, select_lf_design_set, DesignSet,
    MAX_SYSTEM_CONDITION, MIN_REUSE_DISTANCE, THETA_GEO,
};
pub use interp::{fit_interpolation, InterpModel};
pub use subproblem::{cauchy_reduction, minimize_model, SubproblemResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("interpolation system is ill-conditioned (condition number {condition:e})")]
    Geometry { condition: f64 },
    #[error("{points} design points but {values} estimates")]
    Size { points: usize, values: usize },
    #[error("non-finite estimate")]
    NonFinite,
}
