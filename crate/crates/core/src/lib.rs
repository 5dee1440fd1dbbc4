//! Simulation and estimation for exponential-family random graph models.

pub mod attrs;
pub mod diag;
pub mod error;
pub mod formula;
pub mod hull;
pub mod infer;
pub mod loglik;
mod linalg;
pub mod model;
pub mod network;
pub mod propose;
pub mod sample;
pub mod san;
pub mod sample_matrix;

pub use attrs::{AttrColumn, VertexAttributes};
pub use error::{ErgmError, ErrorKind, Result};
pub use formula::{parse_constraint_formula, parse_model_formula, ConstraintSpec, ModelSpec, TermSpec};
pub use model::BoundModel;
pub use network::{Dyad, Network};
pub use propose::{Method, Proposal, ProposalState};
pub use sample_matrix::SampleMatrix;
pub use sample::{ChainSpec, SamplerConfig};
