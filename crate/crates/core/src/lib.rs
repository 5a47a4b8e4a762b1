//! Simulator and scheduling library for fast-uplink grant allocation in a
//! cell of IoT devices driven by hidden Markovian events.
//!
//! A base station owns `L` uplink slots per time step and must decide, before
//! seeing the truth, which of `K` devices to schedule. Devices activate when
//! hidden On/Off Markov events fire. The crate provides:
//!
//! - the generative model ([`model`]),
//! - exact Bayesian filtering over the joint event state and one-step
//!   activation prediction ([`inference`]),
//! - hyperparameter estimation from activation traces ([`estimation`]),
//! - grant allocation policies from round-robin to predictive schedulers
//!   with age-of-information compensation ([`sched`]),
//! - scheduling-quality metrics ([`metrics`]),
//! - tuning of the age-compensation weight ([`tuning`]),
//! - and a deterministic multi-seed experiment harness
//!   ([`config`], [`harness`], [`report`]).
//!
//! Everything is reproducible: all randomness flows from a single root seed
//! through named substreams, so equal seeds give byte-identical outputs.

pub mod config;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod sched;
pub mod tuning;

pub use config::{BetaSetting, ExperimentConfig};
pub use error::{Error, Result};
pub use model::{ActivationVector, EventStateVector, ModelParams};
pub use sched::PolicyKind;
