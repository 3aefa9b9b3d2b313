//! Physics-informed neural-network solver for phase-change
//! thermal-fluid problems.
//!
//! The crate couples a from-scratch derivative engine (reverse-mode tape
//! with forward-propagated input derivatives) to a fully connected swish
//! network whose Dirichlet boundary values are enforced exactly by a
//! smoothed-Heaviside output wrapper. On top sit the PDE-residual loss
//! machinery, Adam training, a closed-form 1D solidification benchmark
//! with a finite-element baseline, and the laser melt-pool problem
//! definitions with manufactured-solution verification of the 3D
//! residual stack.

pub mod ambench;
pub mod cli;
pub mod autodiff;
pub mod config;
pub mod loss;
pub mod mms;
pub mod network;
pub mod optimizer;
pub mod physics;
pub mod problem;
pub mod stefan;
