//! Numerical laboratory for boundary-degenerate elliptic operators
//! `A u = -x_d tr(a D^2 u) - b . Du + c u` on half-spaces and slabs.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod diff;
pub mod error;
pub mod fdm;
pub mod geometry;
pub mod holder;
pub mod linalg;
pub mod operators;
pub mod probes;
pub mod quadrature;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
