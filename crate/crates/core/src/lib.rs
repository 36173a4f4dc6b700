//! Storage designs, assignment solvers and load/delay evaluation for
//! block-diagonal coded distributed matrix-vector multiplication.
//!
//! The crate is organized bottom-up:
//! - [`model`]: validated parameters, exact closed forms and the delay model;
//! - [`storage`] and [`design_file`]: assignment matrices and their files;
//! - [`evaluation`]: communication load and delay of a concrete design;
//! - [`cache`] and [`solvers`]: assignment search;
//! - [`shuffle`]: message-level shuffle simulation used to cross-check
//!   [`evaluation`].

pub mod cache;
pub mod design_file;
pub mod evaluation;
pub mod model;
pub mod shuffle;
pub mod solvers;
pub mod storage;

pub use model::{Fraction, RawParameters, Rational, SystemParameters};
pub use storage::{AssignmentMatrix, StorageDesign};
