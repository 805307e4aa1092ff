//! Numerical toolkit for linear stochastic approximation driven by Markov noise.
//!
//! The crate covers Lyapunov-based contraction analysis, Markov chain models
//! with subgeometric drift certificates, step-size schedules, explicit
//! constants for moment bounds, simulation of the recursion and its error
//! decomposition, Monte Carlo stability estimates and temporal-difference
//! learning instances.

// `!(x < y)` is used throughout so that NaN inputs fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod cli;
pub mod constants;
pub mod linalg;
pub mod lsa;
pub mod rng;
pub mod schedules;
pub mod stability;
pub mod stats;
pub mod td;
