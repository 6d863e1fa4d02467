//! Numerical laboratory for the Taylor backward shift on Bergman spaces of
//! planar domains obtained by carving doubly-exponentially flat cusps out of
//! the unit disc.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: strip coordinates, cups, cusp regions, domains, bridges
//! - [`quadrature`]: spherical-measure integration with exact ray clipping
//! - [`funcspace`]: Taylor polynomials, eigenfunction combinations, Gram systems
//! - [`analysis`]: Cauchy transforms, growth bounds, eigenvalue classification
//! - [`construct`]: staged domain construction with certificates
//! - [`dynamics`]: orbit norms and mixing witnesses
//! - [`cli`]: configuration, pipelines and SVG rendering

pub mod analysis;
pub mod cli;
pub mod construct;
pub mod dynamics;
mod error;
pub mod funcspace;
pub mod geometry;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
