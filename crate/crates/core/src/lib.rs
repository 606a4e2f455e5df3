//! Bi-fidelity derivative-free trust-region optimization of stochastic
//! simulations, with the problems and benchmark harness used to evaluate it.

pub mod estimators;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod problems;
pub mod solver;
