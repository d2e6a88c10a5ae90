//! Sampling-based finite abstraction and controller synthesis for Markov
//! jump linear systems.
//!
//! The pipeline turns a jump linear system with unknown additive noise into
//! an interval MDP whose transition bounds are probabilistically sound,
//! synthesizes a policy that robustly satisfies a PCTL formula, and extracts
//! a continuous feedback controller that can be validated in closed loop.

pub mod abstraction;
pub mod checker;
pub mod cli;
pub mod geometry;
pub mod model;
pub mod pctl;
pub mod runtime;
pub mod scenario;
