//! Non-smooth analysis toolkit.
//!
//! Exact directional derivatives and Bouligand, Clarke, Fréchet and limiting
//! subdifferentials for piecewise-affine and piecewise linear-quadratic
//! expressions, sampling oracles for general locally Lipschitz functions,
//! stationarity classification, and subgradient / majorization-minimization
//! solvers with the experiment harnesses built on them.

pub mod experiments;
pub mod expr;
pub mod gallery;
pub mod lspar;
pub mod polyhedra;
pub mod rng;
pub mod solvers;
pub mod stationarity;
pub mod subdiff;
