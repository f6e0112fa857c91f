//! Pixel-level primitives shared by the color, texture and shape pipelines.
//!
//! Everything in here is a pure function over immutable inputs.

mod codec;
mod morphology;
mod raster;

pub use codec::{decode_image, encode_pgm, encode_ppm, sniff_format, ImageFormat};
pub use morphology::{
    binarize_otsu, dilate, erode, morph_open, morph_skeleton, otsu_threshold,
    resize_binary_nearest, sobel_edges, sobel_magnitude, StructuringElement,
};
pub use raster::{
    cap_size, merge_channels, pad_square_block, resize_bilinear, split_channels, to_grayscale,
    BinaryImage, ChannelMatrix, RasterImage, MAX_SIDE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("corrupt image payload: {0}")]
    CorruptPayload(String),
    #[error("channel is constant; no foreground can be separated")]
    ConstantChannel,
    #[error("image is too small ({rows}x{cols}); need at least 3x3")]
    TooSmall { rows: usize, cols: usize },
    #[error("invalid dimensions {rows}x{cols}")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("invalid structuring element: {0}")]
    InvalidStructuringElement(&'static str),
}
