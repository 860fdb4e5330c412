//! Numerical toolkit for selfadjoint matrix Schrodinger operators
//! `-d^2/dx^2 + V(x)` on the half-line.
//!
//! The crate locates bound states through the Jost matrix, builds their
//! Gel'fand-Levitan normalization, removes or adds bound states with the
//! Darboux-type transformation, and evaluates the reverse Lieb-Thirring
//! inequality `sum m_j sqrt|lambda_j| > (1/4) [-integral Tr V - Tr B]`.
//! A finite-difference eigenvalue solver serves as an independent oracle.

pub mod darboux;
pub mod error;
pub mod fdoracle;
pub mod io;
pub mod ltcheck;
pub mod matcore;
pub mod model;
pub mod propagate;
pub mod quad;
pub mod spectral;

pub use error::{Error, Result};
pub use matcore::{CMat, HermMatrix, Projection};
pub use model::{BoundaryPair, DiagonalBoundary, PotentialGrid};
pub use propagate::{MatrixSolution, PropagateOptions};
pub use spectral::{BoundState, SpectralOptions, SpectrumReport};
