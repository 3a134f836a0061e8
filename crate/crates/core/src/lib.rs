//! Open-loop generalized Nash equilibria of finite-horizon linear-quadratic
//! dynamic games with polytopic constraints.
//!
//! The crate computes variational GNE trajectories together with their
//! per-agent co-states, certifies them as ε-GNEs through independent
//! best-response QPs, and provides the analysis layer built on top of the
//! solver: steady-state equilibria, turnpike counting, dissipation
//! inequalities along equilibrium pairs, value-function sensitivity and
//! terminal-penalty design (including the adaptive penalty learning loop).
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the companion `gnep-cli` crate.

#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dissipativity;
mod error;
pub mod game;
pub mod gnep;
pub mod kkt;
mod linalg;
mod mlcp;
pub mod qp;
pub mod sensitivity;
pub mod steady;
pub mod terminal;
pub mod turnpike;

pub use error::{Error, Result};
pub use game::{LqGame, Terminal, Trajectory, ValidationReport};
pub use gnep::{GnePair, SolverOptions};
pub use kkt::{DualTrajectory, KktResidual};
pub use linalg::{Matrix, Vector};
pub use steady::{CentralSteadyState, SteadyStateGne};
