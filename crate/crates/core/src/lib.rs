//! Thermal face recognition pipeline.
//!
//! The crate is organized along the processing chain:
//!
//! - [`imaging`] – grayscale image I/O (PGM/PNG), a synthetic face generator,
//!   and the dataset manifest format.
//! - [`polar`] – log-polar registration: rotations of the source image become
//!   circular column shifts, uniform scalings become radial shifts.
//! - [`linefeat`] – oriented 3×3 line-detection masks applied to polar images.
//! - [`eigenspace`] – PCA over flattened line images via the Gram-matrix
//!   (snapshot) construction.
//! - [`classifier`] – a tansig multilayer perceptron trained by online
//!   backpropagation with momentum.
//! - [`evaluation`] – 3-fold cross-validation, top-k scoring, and the
//!   transform-variant comparison.
//! - [`config`] / [`model`] – the pipeline configuration file and the
//!   versioned binary model format.

pub mod classifier;
pub mod config;
pub mod eigenspace;
pub mod evaluation;
pub mod imaging;
pub mod linefeat;
pub mod model;
pub mod polar;

/// Derives an independent seed for a named random stream.
///
/// Every seeded stage (fold assignment, weight init, epoch shuffling, face
/// synthesis) draws its seed through this so that stages never share a stream
/// and a single global seed reproduces a whole run. SplitMix64 finalizer.
pub fn subseed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
