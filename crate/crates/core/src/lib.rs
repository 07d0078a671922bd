//! Nucleated-polymerization model of prion proliferation: monomer level
//! `V(t)` coupled to a polymer size density `u(t, x)` that grows by
//! monomer attachment, fragments and is degraded.

pub mod coefficients;
pub mod discrete;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod grid;
mod hessenberg;
pub mod kernel;
pub mod operator;
pub mod state;
pub mod steady;
pub mod sweep;

pub use coefficients::{CoefficientSet, CoefficientShape, Kernel, SampledCoefficients};
pub use eigen::{EigenOptions, EigenSolution};
pub use error::{ModelError, Result};
pub use grid::{SizeGrid, Spacing};
pub use operator::{Discretization, FragOperator, TransportScheme};
pub use state::PolymerState;
