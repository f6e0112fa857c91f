//! Content-based image retrieval engine.
//!
//! Images are described by three fixed-width feature vectors: color
//! statistics over the RGB histograms ([`color`]), spectral radii of Haar
//! wavelet sub-bands ([`texture`]) and a Fourier descriptor of the
//! morphological skeleton ([`shape`]). The shape descriptor drives a small
//! feed-forward classifier ([`classifier`]) that assigns one of nine
//! categories; retrieval ([`retrieval`]) compares color and texture only
//! against images of the predicted category and fuses the two similarities
//! with a harmonic mean. Everything is persisted in a single-file
//! [`store`], including the relevance-feedback ledger that can reassign
//! category codes.

pub mod classifier;
pub mod color;
pub mod imagecore;
pub mod numerics;
pub mod retrieval;
pub mod shape;
pub mod store;
pub mod synth;
pub mod texture;

pub use classifier::{Category, NetworkWeights};
pub use imagecore::{BinaryImage, ChannelMatrix, RasterImage};
