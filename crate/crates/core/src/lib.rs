//! Numerical laboratory for second-order elliptic equations on balls cut by a
//! crack: slit-sphere spectra, Almgren-type frequency functions, Pohozaev
//! identities, blow-up coefficients and smoothed approximating domains.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod blowup;
pub mod config;
pub mod error;
pub mod experiment;
pub mod field;
pub mod frequency;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
