//! Lax-Friedrichs scheme for scalar conservation laws, the equivalent
//! Hamilton-Jacobi scheme, and its random-walk variational representation.

pub mod grid;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod scheme;
pub mod variational;
pub mod walk;
