//! Finite discounted general-sum stochastic games: equilibrium computation and
//! verification, potential-based reward shaping, and shaped-versus-unshaped
//! multi-agent learning experiments.

pub mod catalog;
pub mod error;
pub mod game;
pub mod io;
pub mod learn;
pub mod lp;
pub mod matrix;
pub mod random;
pub mod shaping;
pub mod solver;

pub use error::{Error, Result};
