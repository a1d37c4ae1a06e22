//! Spectral analysis of the Bloch-Torrey operator `-∇² - i g x` on bounded domains
//! in the truncated Laplacian eigenbasis.
//!
//! - [`basis`]: Laplacian eigenbases and the gradient matrix B
//! - [`operator`]: eigensolves of `Λ - i g B`, modes and time evolution
//! - [`tracking`]: sheet continuation, contour integrals and monodromy
//! - [`scanner`]: branch-point search by contour subdivision
//! - [`jordan`]: local Jordan structure at a branch point
//! - [`toy2x2`]: the 2x2 model and multivalued sheet functions

pub mod assignment;
pub mod basis;
pub mod error;
pub mod io;
pub mod jordan;
pub mod linalg;
pub mod operator;
pub mod registry;
pub mod scanner;
pub mod special;
pub mod toy2x2;
pub mod tracking;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
