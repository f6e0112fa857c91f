use super::ImageError;

/// Longest side allowed before feature extraction; larger images are
/// bilinearly shrunk so the longer side equals this value.
pub const MAX_SIDE: usize = 512;

/// Decoded 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::InvalidDimensions { rows: height, cols: width });
        }
        Ok(Self { width, height, pixels })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    /// Rotates the image by 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        // New image is h wide, w tall; new(r, c) = old(h - 1 - c, r).
        Self::from_fn(h, w, |r, c| self.pixel(h - 1 - c, r)).expect("same pixel count")
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| self.pixel(c, r)).expect("same pixel count")
    }
}

/// A single real-valued image plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ChannelMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, ImageError> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(ImageError::InvalidDimensions { rows, cols });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.values[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Copies the `rows`×`cols` block whose top-left corner is `(row, col)`.
    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self.get(row + r, col + c))
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Binary image, row-major; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != rows * cols {
            return Err(ImageError::InvalidDimensions { rows, cols });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(f(r, c));
            }
        }
        Self { rows, cols, bits }
    }

    /// Parses rows of `#` (foreground) and `.` (background).
    pub fn from_ascii(rows: &[&str]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), cols, |r, c| rows[r].as_bytes()[c] == b'#')
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.cols + col] = v;
    }

    /// Out-of-bounds coordinates read as `None`.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> Option<bool> {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn union_with(&mut self, other: &Self) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Self { rows: self.rows, cols: self.cols, bits }
    }

    /// Foreground as 1.0, background as 0.0.
    pub fn to_channel(&self) -> ChannelMatrix {
        ChannelMatrix::from_fn(self.rows, self.cols, |r, c| if self.get(r, c) { 1.0 } else { 0.0 })
    }
}

pub fn split_channels(img: &RasterImage) -> (ChannelMatrix, ChannelMatrix, ChannelMatrix) {
    let plane = |k: usize| ChannelMatrix {
        rows: img.height,
        cols: img.width,
        values: img.pixels.iter().map(|p| f64::from(p[k])).collect(),
    };
    (plane(0), plane(1), plane(2))
}

/// Recombines three planes into an RGB image, rounding and clamping to 8 bits.
pub fn merge_channels(
    red: &ChannelMatrix,
    green: &ChannelMatrix,
    blue: &ChannelMatrix,
) -> Result<RasterImage, ImageError> {
    let dims = (red.rows, red.cols);
    if (green.rows, green.cols) != dims || (blue.rows, blue.cols) != dims {
        return Err(ImageError::InvalidDimensions { rows: red.rows, cols: red.cols });
    }
    let to_u8 = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let pixels = (0..red.values.len())
        .map(|i| [to_u8(red.values[i]), to_u8(green.values[i]), to_u8(blue.values[i])])
        .collect();
    RasterImage::new(red.cols, red.rows, pixels)
}

/// ITU-R 601 luma.
pub fn to_grayscale(img: &RasterImage) -> ChannelMatrix {
    ChannelMatrix {
        rows: img.height,
        cols: img.width,
        values: img
            .pixels
            .iter()
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect(),
    }
}

/// Bilinear resampling with corner-aligned sample positions: output index `i`
/// reads source coordinate `i * (rows - 1) / (new_rows - 1)`.
pub fn resize_bilinear(ch: &ChannelMatrix, new_rows: usize, new_cols: usize) -> ChannelMatrix {
    assert!(new_rows > 0 && new_cols > 0, "target dimensions must be positive");
    if (new_rows, new_cols) == (ch.rows, ch.cols) {
        return ch.clone();
    }
    let coord = |i: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        if dst == 1 || src == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
        let lo = (x.floor() as usize).min(src - 1);
        let hi = (lo + 1).min(src - 1);
        (lo, hi, x - lo as f64)
    };
    let row_map: Vec<_> = (0..new_rows).map(|i| coord(i, ch.rows, new_rows)).collect();
    let col_map: Vec<_> = (0..new_cols).map(|j| coord(j, ch.cols, new_cols)).collect();
    ChannelMatrix::from_fn(new_rows, new_cols, |i, j| {
        let (r0, r1, fr) = row_map[i];
        let (c0, c1, fc) = col_map[j];
        let top = ch.get(r0, c0) * (1.0 - fc) + ch.get(r0, c1) * fc;
        let bottom = ch.get(r1, c0) * (1.0 - fc) + ch.get(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

/// Shrinks the image so its longer side is at most [`MAX_SIDE`], keeping the
/// aspect ratio. Images already within the cap are returned unchanged.
pub fn cap_size(img: &RasterImage) -> RasterImage {
    let long = img.width.max(img.height);
    if long <= MAX_SIDE {
        return img.clone();
    }
    let scale = MAX_SIDE as f64 / long as f64;
    let scaled = |d: usize| {
        if d == long {
            MAX_SIDE
        } else {
            ((d as f64 * scale).round() as usize).clamp(1, MAX_SIDE)
        }
    };
    let (rows, cols) = (scaled(img.height), scaled(img.width));
    let (r, g, b) = split_channels(img);
    merge_channels(
        &resize_bilinear(&r, rows, cols),
        &resize_bilinear(&g, rows, cols),
        &resize_bilinear(&b, rows, cols),
    )
    .expect("planes share dimensions")
}

/// Zero-pads to an `S`×`S` square with `S` the smallest multiple of `block`
/// not below the longer side. The input occupies the top-left corner.
pub fn pad_square_block(ch: &ChannelMatrix, block: usize) -> ChannelMatrix {
    assert!(block >= 1, "block must be at least 1");
    let side = ch.rows.max(ch.cols).div_ceil(block) * block;
    if side == ch.rows && side == ch.cols {
        return ch.clone();
    }
    let mut out = ChannelMatrix::zeros(side, side);
    for r in 0..ch.rows {
        out.values[r * side..r * side + ch.cols].copy_from_slice(ch.row(r));
    }
    out
}
