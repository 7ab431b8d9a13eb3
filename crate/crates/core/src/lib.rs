//! Numerical laboratory for non-autonomous holomorphic dynamics in C^k.
//!
//! The crate evaluates sequences of polynomial automorphisms, their
//! non-autonomous basins at the origin, the plurisubharmonic potentials
//! attached to them, and the boundary graphs of the resulting domains.
//! Every computation that can exceed double precision range is carried
//! out in log-polar form ([`LogScalar`]).

pub mod basin;
pub mod boundary;
pub mod config;
pub mod error;
pub mod geometry;
pub mod logscalar;
pub mod maps;
pub mod output;
pub mod potentials;
pub mod rng;
pub mod run;
pub mod theorem_lab;

pub use error::{Error, Result};
pub use geometry::{ComplexVector, FiltrationSpec, Region, RegionTag};
pub use logscalar::{LogScalar, Scalar};
pub use maps::{MapSequence, MapSpec};
pub use num_complex::Complex64;

/// Crate version echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
