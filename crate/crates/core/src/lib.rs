//! Critical radius of nonnegative potentials, BLO/BMO/Campanato seminorms
//! weighted by it, adapted Muckenhoupt weight constants and the dyadic
//! stopping-time decomposition, all on piecewise-constant grid fields.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix `f64`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod critical_radius;
pub mod czjn;
pub mod error;
pub mod generators;
pub mod grid;
pub mod report;
pub mod scalar;
pub mod seminorms;
pub mod theorems;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Field = grid::GridField<f64>;
pub type Box3 = grid::GridBox<f64>;
pub type Ball = grid::BallSpec<f64>;
