//! Structure-aware stochastic control for energy-efficient transmission
//! scheduling.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithm of the
//! simulator: concave piecewise-linear value functions and their sandwich
//! approximation ([`pwl`]), the simulated transmission environment ([`env`]),
//! exact and approximate dynamic-programming solvers ([`oracle`]), the online
//! post-decision learner ([`learner`]), its multi-queue priority extension
//! ([`priority`]), the comparison schedulers ([`baselines`]) and the slot-level
//! simulation loop that ties them together ([`sim`]).
//!
//! File formats, configuration and the command line live in the companion
//! `adp-sched` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
// Negated float comparisons reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod baselines;
pub mod env;
pub mod error;
pub mod learner;
pub mod num;
pub mod oracle;
pub mod priority;
pub mod pwl;
pub mod sim;

pub use error::{Error, Result};
