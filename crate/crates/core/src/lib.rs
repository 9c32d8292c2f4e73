//! Numerical free convolution of triangular-array rows on the line, the
//! half-line and the unit circle, with density recovery along the boundary
//! curves of the inverse transforms.

pub mod additive;
pub mod error;
pub mod harness;
pub mod inversion;
pub mod limits;
pub mod measures;
pub mod mult_circle;
pub mod mult_halfline;
pub mod numeric;
pub mod quadrature;
pub mod rows;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;
