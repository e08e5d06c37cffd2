//! Sparse domination of lattice-valued maximal and sparse operators on dyadic grids.
//!
//! Functions take values in `R^n` ordered coordinatewise and normed by a Banach lattice norm.
//! The crate builds sparse stopping families, verifies the pointwise domination
//! `M f <= C A_{q,S} f`, reproduces the chain counterexample whose constants grow like
//! `n^(1/r - 1/q)`, measures weighted bounds against Muckenhoupt characteristics, and checks a
//! Calderon-Zygmund decomposition.
//!
//! Everything is generic over the scalar type; the aliases below fix it to `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod czdecomp;
pub mod error;
pub mod generate;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod measure;
pub mod operators;
pub mod scalar;
pub mod seed;
pub mod sharpness;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{CubeCollection, CubeId, GridSpec};
pub use lattice::{LatticeVector, NormSpec};
pub use measure::{average, bochner_norm, DyadicMeasure, NormMode, SimpleFunction};
pub use scalar::Scalar;

pub type Vector = LatticeVector<f64>;
pub type Norm = NormSpec<f64>;
pub type Measure = DyadicMeasure<f64>;
pub type Function = SimpleFunction<f64>;
