//! Shape descriptor: smoothed black-and-white image, Sobel edges,
//! morphological skeleton, then the largest log-magnitudes of its centered
//! 2D spectrum.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{
    binarize_otsu, cap_size, encode_pgm, morph_skeleton, pad_square_block, resize_binary_nearest,
    sobel_edges, to_grayscale, BinaryImage, ChannelMatrix, ImageError, RasterImage,
    StructuringElement,
};
use crate::numerics::{dwt2_multilevel, fft2, fftshift, idwt2, NumericsError};

pub const SHAPE_DIM: usize = 30;
/// Side of the square grid the skeleton is resampled to before the FFT.
pub const SPECTRUM_SIDE: usize = 128;
const SMOOTHING_LEVELS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("image contains no shape (no foreground after binarization and skeletonization)")]
    EmptyShape,
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The 30 largest values of `ln(1 + |F|)`, sorted descending and divided by
/// the largest, so the first entry is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDescriptor(pub [f64; SHAPE_DIM]);

impl ShapeDescriptor {
    pub fn values(&self) -> &[f64; SHAPE_DIM] {
        &self.0
    }
}

/// Intermediate images of the pipeline, kept for inspection.
#[derive(Debug, Clone)]
pub struct ShapeTrace {
    pub reconstruction: ChannelMatrix,
    pub binary: BinaryImage,
    pub edges: BinaryImage,
    pub skeleton: BinaryImage,
    /// Centered `ln(1 + |F|)`, `SPECTRUM_SIDE` squared.
    pub log_spectrum: ChannelMatrix,
}

impl ShapeTrace {
    /// Writes each stage as an 8-bit PGM into `dir`.
    pub fn dump(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let write_channel = |name: &str, ch: &ChannelMatrix| {
            let max = ch.values().iter().cloned().fold(0.0, f64::max);
            let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
            let gray: Vec<u8> =
                ch.values().iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
            std::fs::write(dir.join(name), encode_pgm(ch.cols(), ch.rows(), &gray))
        };
        let write_binary = |name: &str, bw: &BinaryImage| {
            let gray: Vec<u8> = bw.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
            std::fs::write(dir.join(name), encode_pgm(bw.cols(), bw.rows(), &gray))
        };
        write_channel("1_reconstruction.pgm", &self.reconstruction)?;
        write_binary("2_binary.pgm", &self.binary)?;
        write_binary("3_edges.pgm", &self.edges)?;
        write_binary("4_skeleton.pgm", &self.skeleton)?;
        write_channel("5_log_spectrum.pgm", &self.log_spectrum)
    }
}

pub fn shape_descriptor(img: &RasterImage) -> Result<ShapeDescriptor, ShapeError> {
    shape_descriptor_traced(img).map(|(d, _)| d)
}

pub fn shape_descriptor_traced(img: &RasterImage) -> Result<(ShapeDescriptor, ShapeTrace), ShapeError> {
    let gray = to_grayscale(&cap_size(img));
    // A constant image would otherwise pick up a spurious edge from padding.
    if gray.values().iter().all(|&v| v == gray.values()[0]) {
        return Err(ShapeError::EmptyShape);
    }
    let padded = pad_square_block(&gray, 1 << SMOOTHING_LEVELS);
    let mut dec = dwt2_multilevel(&padded, SMOOTHING_LEVELS)?;
    dec.zero_details();
    let reconstruction = idwt2(&dec)?;

    let binary = match binarize_otsu(&reconstruction) {
        Ok(bw) => bw,
        Err(ImageError::ConstantChannel) => return Err(ShapeError::EmptyShape),
        Err(e) => return Err(e.into()),
    };
    let edges = sobel_edges(&binary)?;
    let skeleton = morph_skeleton(&edges, &StructuringElement::cross());
    if skeleton.is_empty() {
        return Err(ShapeError::EmptyShape);
    }
    let (descriptor, log_spectrum) = skeleton_descriptor(&skeleton)?;
    Ok((descriptor, ShapeTrace { reconstruction, binary, edges, skeleton, log_spectrum }))
}

/// Spectral part of the pipeline, starting from a skeleton image.
pub fn skeleton_descriptor(
    skeleton: &BinaryImage,
) -> Result<(ShapeDescriptor, ChannelMatrix), ShapeError> {
    let grid = resize_binary_nearest(skeleton, SPECTRUM_SIDE, SPECTRUM_SIDE);
    let spectrum = fftshift(&fft2(&grid.to_channel())?)?;
    let log_mag: Vec<f64> = spectrum.entries().iter().map(|z| z.norm().ln_1p()).collect();

    // Stable sort keeps row-major order among equal values.
    let mut order: Vec<usize> = (0..log_mag.len()).collect();
    order.sort_by(|&a, &b| log_mag[b].total_cmp(&log_mag[a]));
    let mut top = [0.0; SHAPE_DIM];
    for (slot, &idx) in top.iter_mut().zip(&order) {
        *slot = log_mag[idx];
    }
    let max = top[0];
    if max <= 0.0 {
        return Err(ShapeError::EmptyShape);
    }
    for v in &mut top {
        *v /= max;
    }
    let log_spectrum = ChannelMatrix::new(SPECTRUM_SIDE, SPECTRUM_SIDE, log_mag)
        .expect("spectrum has the grid's dimensions");
    Ok((ShapeDescriptor(top), log_spectrum))
}
