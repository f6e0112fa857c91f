//! Binary PPM/PGM reading and writing; other formats go through `image`.

use serde::{Deserialize, Serialize};

use super::{ImageError, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImageFormat {
    Ppm,
    Pgm,
    Png,
    Jpeg,
    Bmp,
    Gif,
}

impl ImageFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "image/x-portable-pixmap",
            ImageFormat::Pgm => "image/x-portable-graymap",
            ImageFormat::Png => "image/png",
            ImageFormat::Jpeg => "image/jpeg",
            ImageFormat::Bmp => "image/bmp",
            ImageFormat::Gif => "image/gif",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Pgm => "pgm",
            ImageFormat::Png => "png",
            ImageFormat::Jpeg => "jpg",
            ImageFormat::Bmp => "bmp",
            ImageFormat::Gif => "gif",
        }
    }
}

/// Identifies the container format from magic bytes.
pub fn sniff_format(bytes: &[u8]) -> Result<ImageFormat, ImageError> {
    match bytes {
        [b'P', b'6', ..] => Ok(ImageFormat::Ppm),
        [b'P', b'5', ..] => Ok(ImageFormat::Pgm),
        _ => match image::guess_format(bytes) {
            Ok(image::ImageFormat::Png) => Ok(ImageFormat::Png),
            Ok(image::ImageFormat::Jpeg) => Ok(ImageFormat::Jpeg),
            Ok(image::ImageFormat::Bmp) => Ok(ImageFormat::Bmp),
            Ok(image::ImageFormat::Gif) => Ok(ImageFormat::Gif),
            _ => Err(ImageError::UnsupportedFormat),
        },
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage, ImageError> {
    match sniff_format(bytes)? {
        ImageFormat::Ppm => decode_netpbm(bytes, 3),
        ImageFormat::Pgm => decode_netpbm(bytes, 1),
        _ => {
            let decoded = image::load_from_memory(bytes)
                .map_err(|e| ImageError::CorruptPayload(e.to_string()))?
                .into_rgb8();
            let (w, h) = decoded.dimensions();
            let pixels = decoded.pixels().map(|p| p.0).collect();
            RasterImage::new(w as usize, h as usize, pixels)
                .map_err(|e| ImageError::CorruptPayload(e.to_string()))
        }
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::CorruptPayload(format!("missing {what} in header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptPayload(format!("bad {what} in header")))
    }
}

fn decode_netpbm(bytes: &[u8], samples: usize) -> Result<RasterImage, ImageError> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat);
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageError::CorruptPayload("header not terminated".into())),
    }
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptPayload(format!("invalid dimensions {width}x{height}")));
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(samples))
        .ok_or_else(|| ImageError::CorruptPayload("dimensions overflow".into()))?;
    let raster = bytes
        .get(cur.pos..cur.pos + needed)
        .ok_or_else(|| ImageError::CorruptPayload("truncated raster".into()))?;
    let pixels = if samples == 3 {
        raster.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect()
    } else {
        raster.iter().map(|&g| [g, g, g]).collect()
    };
    RasterImage::new(width, height, pixels)
}

/// Binary P6 encoding.
pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.reserve(img.pixels().len() * 3);
    for p in img.pixels() {
        out.extend_from_slice(p);
    }
    out
}

/// Binary P5 encoding of an 8-bit plane given row-major.
pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}
