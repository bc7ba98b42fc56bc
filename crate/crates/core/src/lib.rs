//! Envelopes with prescribed gradient class, their Monge–Ampère measures, and
//! a scenario harness that checks the contact identities numerically.

pub mod envelope;
pub mod error;
pub mod expr;
pub mod grid;
pub mod harness;
pub mod hull;
pub mod legendre;
pub mod measure;
pub mod polytope;
pub mod rng;
pub mod scenario;

pub use envelope::{envelope, maximal_envelope, model_potential, rooftop, EnvelopeOptions, EnvelopeResult};
pub use error::{Error, Result};
pub use expr::Expression;
pub use grid::{sample, Grid, GridFunction, NodeSet};
pub use harness::{CheckReport, Verdict};
pub use measure::{ma, DiscreteMeasure};
pub use polytope::GradientPolytope;
