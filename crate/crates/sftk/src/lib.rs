//! Shifts of finite type and their bilateral AF algebras.
//!
//! The crate is organised bottom-up:
//!
//! * [`sft_core`] builds the edge graph of a transition matrix and enumerates paths.
//! * [`measure`] holds Perron data, the measure of maximal entropy and clopen sets.
//! * [`af_algebra`] materializes the finite-window algebras, the shift automorphism,
//!   the trace and the perturbation lemmas for projections and partial isometries.
//! * [`k_theory`] does exact K0 arithmetic in the matrix picture.
//! * [`shift_equiv`] verifies and searches shift-equivalence certificates.
//! * [`rohlin`] builds towers, stacks and Rohlin partitions and measures their defects.

pub mod af_algebra;
pub mod config;
pub mod error;
pub mod k_theory;
pub mod linalg;
pub mod measure;
pub mod rohlin;
pub mod sft_core;
pub mod shift_equiv;

pub use error::{Error, Result};
