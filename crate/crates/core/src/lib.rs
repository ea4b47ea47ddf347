//! Wright–Fisher driven GEM diffusions on the infinite simplex.
//!
//! The crate is organised bottom-up:
//!
//! - [`wf_diffusion`]: the one-dimensional Wright–Fisher SDE, its Beta
//!   stationary law, scale function and linear eigenfunction.
//! - [`stick_breaking`]: the stick-breaking bijection between `[0,1)^n` and
//!   the (truncated) simplex, exact GEM / Poisson–Dirichlet samplers, random
//!   Dirichlet measures and the Ewens sampling formula.
//! - [`gem_generator`]: the explicit second-order generator of the stick
//!   process pushed onto the simplex, its carré du champ and the finite
//!   dimensional product generator it is conjugate to.
//! - [`functional_inequalities`]: Poincaré / log-Sobolev constants and
//!   nested Monte Carlo estimates of variance and entropy decay.
//! - [`measure_valued`]: the atomic measure-valued process obtained by
//!   attaching independently mutating types to the simplex weights.
//! - [`harness`]: experiment configuration, orchestration and CSV/JSON
//!   reports, used by the `gemdiff` binary.
//!
//! Every random quantity is driven by an explicit [`RngStream`]; parallel
//! work derives one stream per task from `(seed, task index)` so results do
//! not depend on the number of worker threads.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functional_inequalities;
pub mod gem_generator;
pub mod harness;
pub mod measure_valued;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod stick_breaking;
pub mod wf_diffusion;

pub use error::{Error, Result};
pub use rng::RngStream;
