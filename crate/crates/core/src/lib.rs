//! Monodromy data of isomonodromic linear systems with poles at 0 and ∞,
//! closed forms at the boundary, and the flow between them.

pub mod closed;
pub mod error;
pub mod flow;
pub mod gamma;
pub mod inverse;
pub mod io;
pub mod matrix;
pub mod ode;
pub mod rh;
pub mod tt;

pub use error::{Error, ErrorClass, Result};
pub use matrix::{CMat, C64};
