//! Sparse, exactly orthogonal weight initialization.
//!
//! Matrices of any target density are sampled by composing random Givens
//! rotations ([`sampler`]); the density growth is predicted by a birth
//! chain over row nonzero counts ([`density`]). Convolutional kernels embed
//! such a matrix at their spatial center ([`conv`]). [`alloc`] spreads a
//! global density budget over layers, [`isometry`] measures the Jacobian
//! spectra of sparse MLPs, [`ai`] is the gradient-descent baseline and
//! [`bench`] times both generators.

pub mod ai;
pub mod alloc;
pub mod bench;
pub mod cli;
pub mod conv;
pub mod density;
pub mod error;
pub mod exec;
pub mod io;
pub mod isometry;
pub mod linalg;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use exec::Exec;
pub use sampler::{
    sample_biases, sample_rectangular, sample_square, AngleMode, GivensRotation, Sampled,
    SparseOrthoMatrix,
};
