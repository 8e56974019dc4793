//! Mean-field dynamics of permutation-symmetric quantum chains: macroscopic flow,
//! quasi-local propagators, fluctuation flow, hybrid generators and a finite-N oracle.

pub mod algebra;
pub mod error;
pub mod hybridgen;
pub mod io;
pub mod linalg;
pub mod macroflow;
pub mod mesoflow;
pub mod ode;
pub mod oracle;
pub mod pipeline;
pub mod quasilocal;
pub mod refexample;
pub mod tolerances;

pub use error::{Error, Result};
