//! Locally sparse encoded descriptors (LSED) for face and image verification.
//!
//! An image is split into regions, each region into overlapping patches.
//! Every patch is normalised, described by low-frequency 2D DCT
//! coefficients, and turned into a sparse code by one of three encoders:
//!
//! * l1-minimisation over a K-SVD dictionary ([`encoding::L1Encoder`]),
//! * a sparse autoencoder's hidden layer ([`encoding::SannEncoder`]),
//! * Gaussian mixture posteriors ([`encoding::GmmEncoder`]).
//!
//! Codes are average-pooled per region and concatenated into a
//! [`descriptors::FaceDescriptor`], which is compared with the region-sum L1
//! distance and optional cohort normalisation ([`matching`]). The
//! [`evaluation`] module holds the verification/identification protocols and
//! experiment harnesses.
//!
//! Patch encoding, fold evaluation and experiment sweeps are data-parallel
//! when the `parallel` feature is enabled (the default); results never depend
//! on the worker count.

pub mod config;
pub mod descriptors;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod learning;
pub mod matching;
pub mod par;
pub(crate) mod util;

pub use error::{LsedError, Result};

/// Seeded generator used by every stochastic routine in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Creates the crate's deterministic generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
