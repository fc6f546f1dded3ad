//! Certifying multi-objective ω-regular model checking for MDPs.
//!
//! The pipeline: take the product with deterministic automata, decompose into
//! maximal end components, find the index sets of properties satisfiable in
//! each, build the MEC quotient, and decide multi-objective reachability on
//! it with Farkas certificates. Every verdict comes with a certificate bundle
//! that [`omega::validate_bundle`] checks without calling any generator.

pub mod automata;
pub mod component_certs;
pub mod ec_analysis;
pub mod error;
pub mod graph;
pub mod hoa;
pub mod io;
pub mod model;
pub mod omega;
pub mod quotient;
pub mod reach;
pub mod uba;
pub mod witness;

pub use error::{Error, Result};
