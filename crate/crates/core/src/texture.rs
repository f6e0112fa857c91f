//! Texture features: spectral radius of every sub-band of a four-level Haar
//! decomposition, per RGB channel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{cap_size, pad_square_block, split_channels, ChannelMatrix, RasterImage};
use crate::numerics::{dwt2_multilevel, spectral_radius, NumericsError};

pub const TEXTURE_LEVELS: usize = 4;
pub const BANDS_PER_CHANNEL: usize = 3 * TEXTURE_LEVELS + 1;
pub const TEXTURE_DIM: usize = 3 * BANDS_PER_CHANNEL;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextureError {
    #[error("feature extraction failed at sub-band {band}: {source}")]
    FeatureExtractionFailure { band: usize, source: NumericsError },
}

/// 39 non-negative values. Per channel (R, G, B): AP₄, then HL, LH, HH for
/// levels 1 through 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureFeatureVector(pub Vec<f64>);

impl TextureFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// The 13 sub-band spectral radii of one channel. The channel is zero-padded
/// to a square whose side is a multiple of 16 first. `band_offset` is only
/// used to label errors.
pub fn channel_texture_features(
    ch: &ChannelMatrix,
    band_offset: usize,
) -> Result<[f64; BANDS_PER_CHANNEL], TextureError> {
    let padded = pad_square_block(ch, 1 << TEXTURE_LEVELS);
    let dec = dwt2_multilevel(&padded, TEXTURE_LEVELS)
        .map_err(|source| TextureError::FeatureExtractionFailure { band: band_offset, source })?;
    let mut out = [0.0; BANDS_PER_CHANNEL];
    for (i, m) in dec.matrices().into_iter().enumerate() {
        out[i] = spectral_radius(m).map_err(|source| TextureError::FeatureExtractionFailure {
            band: band_offset + i,
            source,
        })?;
    }
    Ok(out)
}

pub fn texture_vector(img: &RasterImage) -> Result<TextureFeatureVector, TextureError> {
    let img = cap_size(img);
    let (r, g, b) = split_channels(&img);
    let mut values = Vec::with_capacity(TEXTURE_DIM);
    for (k, ch) in [r, g, b].iter().enumerate() {
        values.extend(channel_texture_features(ch, k * BANDS_PER_CHANNEL)?);
    }
    Ok(TextureFeatureVector(values))
}
