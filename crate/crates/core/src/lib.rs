//! Divergence examples for line-search optimization methods.
//!
//! This crate builds two fully explicit counterexamples in which a line-search
//! method with a descent direction of the form `d_k = -(M_k M_k^t)^{-1} g_k`
//! drives the objective value down forever while the gradient norm stays
//! bounded away from zero: one for Gauss-Newton (dimension 7, period 12) and
//! one for BFGS with unit steps and exact line searches (dimension 9, period
//! 576). Both orbits are given in closed form by periodic normalized data
//! scaled through an orthogonal matrix `Q` and a diagonal contraction
//! `D(lambda)`.
//!
//! The crate provides:
//!
//! * [`interval`] / [`moore`] — outward-rounded interval arithmetic and a
//!   Moore-style existence test that certifies roots of nonlinear systems,
//!   used to prove that the BFGS example's free parameters exist.
//! * [`schema`] / [`checks`] — the general periodic-orbit framework:
//!   materialization of iterates, values, gradients and Hessians, step/iterate
//!   reconstruction, and verification of all geometric, convexity and
//!   line-search conditions.
//! * [`gn`] — the Gauss-Newton example with its Jacobian, step-size schedule
//!   and replay of the actual update rule.
//! * [`bfgs`] — the BFGS example: the rho-parameter solve, its interval
//!   certification, the Gamma/orbit construction and the update induction.
//! * [`replay`] — generic optimizer drivers (steepest descent, Newton with
//!   fallback, BFGS, Gauss-Newton), Wolfe/Goldstein probes and a convergence
//!   sanity checker for benign problems.

pub mod bfgs;
pub mod checks;
pub mod gn;
pub mod interval;
pub mod moore;
pub mod replay;
pub mod report;
pub mod schema;

pub use interval::{Interval, IntervalError, IntervalMatrix, IntervalVector};
pub use moore::{moore_certify, MooreCertificate};
pub use report::{CheckStatus, ConditionReport, WhitneyReport, Witness};
pub use schema::{Blocks, MaterializedPoint, OrbitSchema, SchemaError};
