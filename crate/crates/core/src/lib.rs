//! Structured region graphs for approximate marginal inference on discrete
//! factor graphs.
//!
//! The crate builds region graphs (Bethe, cluster-variation closures, star
//! graphs, grid boxes, loop-graphs and two-layer EP-graphs), rewrites them
//! with fixed-point-preserving reduction operators, diagnoses singularity,
//! and runs generalized belief propagation (a convergent double-loop scheme
//! by default, single-loop message passing on request).
//!
//! [`io`] reads and writes the plain-text model and region-graph formats,
//! and [`harness`] runs the reproducible experiments behind the `srg` CLI.

pub mod chordal;
pub mod constructions;
pub mod error;
pub mod factor_graph;
pub mod gbp;
pub mod harness;
pub mod io;
pub mod pursuit;
pub mod reductions;
pub mod region_graph;
pub mod table;

pub use error::{Error, Result};
