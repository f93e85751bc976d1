//! Simulation of pure-jump interacting particle systems on sparse marked
//! graphs, driven by per-vertex marked Poisson noise and thinning.
//!
//! The library provides:
//! - a marked-graph data model with lazy expansion and canonical signatures
//!   of small rooted balls ([`graph`]),
//! - random graph and tree generators ([`gen`]),
//! - reproducible band-layered Poisson driving noise ([`noise`]),
//! - local jump-rate models with degree/horizon bounds ([`rates`]),
//! - exact event-thinning simulation on finite graphs plus a replay
//!   verifier ([`sim`]),
//! - backward causal-chain influence sets and localized exact simulation of
//!   finite marginals on infinite graphs ([`localize`]),
//! - degree-dependent site percolation and subcriticality certificates
//!   ([`percolate`]),
//! - empirical measures, correlation-decay and hydrodynamic-limit
//!   experiments, and a small-graph master-equation oracle ([`empirics`]),
//! - a non-uniqueness demonstration on a super-exponential tree
//!   ([`counterexample`]).

pub mod counterexample;
pub mod empirics;
pub mod error;
pub mod gen;
pub mod graph;
pub mod localize;
pub mod noise;
pub mod percolate;
pub mod rates;
pub mod seeding;
pub mod sim;

pub use error::IpsError;
pub use graph::{BallSignature, MarkDiscretizer, MarkedGraph, VertexId};
pub use noise::{DrivingNoise, JumpSpec, NoiseEvent};
pub use rates::RateModel;
pub use sim::Trajectory;
