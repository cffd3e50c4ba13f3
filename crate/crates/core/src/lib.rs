//! Heat equation on a bounded domain with a Robin boundary condition whose
//! reactivity switches as a finite-state Markov chain.
//!
//! Monte Carlo Feynman–Kac estimators built on reflected Brownian motion and
//! its boundary local time sit next to finite-difference solvers used as
//! independent oracles.

pub mod chain;
pub mod cli;
pub mod experiments;
pub mod functional;
pub mod geometry;
pub mod pde;
pub mod rbm;
pub mod stream;
