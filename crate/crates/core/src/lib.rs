//! Core library of the gradient-leakage laboratory.
//!
//! The crate simulates a dishonest federated-learning server that crafts
//! model parameters so that clients' uploaded gradients leak training
//! images, and the augmentation defense that blocks the leak:
//!
//! - [`linalg`]: dense row-major matrices with fixed-order reductions.
//! - [`imaging`]: images, affine transforms, PSNR, and PPM/PGM codecs.
//! - [`defense`]: augmentation suites and batch expansion.
//! - [`model`]: the attacked two-layer network, exact backprop, SGD.
//! - [`attacks`]: imprint, trap, and linear-model gradient inversion.
//! - [`flsim`]: one federated round end to end.
//! - [`analysis`]: activation census, extractability oracle, matching.

pub mod analysis;
pub mod attacks;
pub mod defense;
pub mod error;
pub mod flsim;
pub mod imaging;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};
