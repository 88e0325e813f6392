//! Potential theory on weighted lattice graphs: Green functions, harmonic
//! measures, the boundary trace of a reflected walk and its heat kernel.
//!
//! Domains are built by [`graphdomain::build_domain`]; everything else takes
//! the resulting [`graphdomain::DomainGraph`] by reference.

pub mod error;
pub mod experiment;
pub mod graphdomain;
pub mod measures;
pub mod montecarlo;
pub mod naimtrace;
pub mod potential;
pub mod report;
pub mod solvers;
pub mod traceheat;

pub use error::{Error, Result};
pub use graphdomain::{build_domain, DomainGraph, DomainSpec, Family};
pub use report::EstimateReport;
