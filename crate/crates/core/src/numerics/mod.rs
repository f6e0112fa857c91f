//! Transform and linear-algebra kernels: orthonormal Haar DWT, radix-2 FFT
//! and the spectral radius of dense real matrices.

mod eigen;
mod fft;
mod haar;

pub use eigen::{eigenvalues, spectral_radius};
pub use fft::{fft2, fft_in_place, fftshift, ComplexMatrix};
pub use haar::{dwt2_multilevel, haar_forward_1d, haar_inverse_1d, idwt2, DetailBands, WaveletDecomposition};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("signal length {0} is odd")]
    OddLength(usize),
    #[error("approximation and detail lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("side {side} is not divisible by 2^{levels}")]
    NotDivisible { side: usize, levels: usize },
    #[error("decomposition must have at least one level")]
    ZeroLevels,
    #[error("malformed wavelet pyramid: {0}")]
    MalformedPyramid(String),
    #[error("dimensions {rows}x{cols} are not powers of two")]
    NotPowerOfTwo { rows: usize, cols: usize },
    #[error("dimensions {rows}x{cols} are not even")]
    OddDims { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}
