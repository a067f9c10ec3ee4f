//! Degree-bias-aware graph contrastive learning.
//!
//! The crate covers the whole pipeline: degree-split graph augmentation
//! ([`augment`]), a two-layer GCN encoder with an MLP projector ([`model`]),
//! the two-view InfoNCE objective ([`objective`]), training ([`trainer`]),
//! linear-probe evaluation with degree-fairness metrics ([`eval`]) and an
//! empirical probe of community concentration and scatter ([`theory`]).

pub mod augment;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod model;
pub mod objective;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod sbm;
pub mod theory;
pub mod trainer;

pub use error::{GradeError, Result};
pub use graph::Graph;
