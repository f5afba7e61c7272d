//! Geometric mechanics engine.
//!
//! Derives exact dynamical vector fields from expression-level Lagrangians
//! and Hamiltonians in the symplectic (autonomous), cosymplectic
//! (time-dependent), contact (dissipative), and unified
//! Lagrangian-Hamiltonian formalisms; integrates trajectories; and verifies
//! conservation, dissipation, and equivalence laws numerically.

pub mod autodiff;
pub mod cli;
pub mod contact;
pub mod cosymplectic;
pub mod error;
pub mod expr;
pub mod integrate;
pub mod lagdata;
pub mod phase;
pub mod registry;
pub mod riemann;
pub mod symmetry;
pub mod system;
pub mod symplectic;
pub mod unified;

pub use error::{EvalError, LinAlgError, MechError, ParseError, Result};
