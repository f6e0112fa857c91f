//! Binarization, Sobel edges and binary morphology.

use std::cmp::Ordering;

use super::{BinaryImage, ChannelMatrix, ImageError};

/// A set of neighbor offsets (row delta, column delta). Always contains the
/// origin and is symmetric about it, which makes erosion and dilation adjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn new(mut offsets: Vec<(isize, isize)>) -> Result<Self, ImageError> {
        offsets.sort_unstable();
        offsets.dedup();
        if offsets.is_empty() {
            return Err(ImageError::InvalidStructuringElement("empty"));
        }
        if offsets.binary_search(&(0, 0)).is_err() {
            return Err(ImageError::InvalidStructuringElement("origin missing"));
        }
        if offsets.iter().any(|&(dr, dc)| offsets.binary_search(&(-dr, -dc)).is_err()) {
            return Err(ImageError::InvalidStructuringElement("not symmetric about the origin"));
        }
        Ok(Self { offsets })
    }

    /// The 3×3 cross: origin plus its four edge neighbors.
    pub fn cross() -> Self {
        Self::new(vec![(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]).expect("cross is valid")
    }

    /// Full square of the given radius (radius 1 is the 3×3 box).
    pub fn square(radius: isize) -> Self {
        let offsets = (-radius..=radius)
            .flat_map(|dr| (-radius..=radius).map(move |dc| (dr, dc)))
            .collect();
        Self::new(offsets).expect("square is valid")
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::cross()
    }
}

/// Histogram of the channel after clamping to [0, 255] and rounding.
fn byte_histogram(ch: &ChannelMatrix) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in ch.values() {
        hist[quantize(v) as usize] += 1;
    }
    hist
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Between-class variance (scaled by N², kept as an exact fraction).
struct Separation {
    num: u128,
    den: u128,
}

impl Separation {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => {
                let a = self.num as f64 / self.den as f64;
                let b = other.num as f64 / other.den as f64;
                a.partial_cmp(&b).unwrap_or(Ordering::Equal)
            }
        }
    }
}

/// Otsu's threshold over a 256-bin histogram: the `t` maximizing the
/// between-class variance of the split `{v <= t}` / `{v > t}`, smallest `t`
/// on ties. Returns `None` when fewer than two bins are occupied.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let total_sum: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let mut best: Option<(u8, Separation)> = None;
    let (mut n0, mut s0) = (0u64, 0u128);
    for t in 0..255usize {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_sum - s0;
        // N² · w0 · w1 · (mu0 - mu1)² = (n1·s0 - n0·s1)² / (n0·n1)
        let diff = (n1 as u128 * s0).abs_diff(n0 as u128 * s1);
        let sep = match diff.checked_mul(diff) {
            Some(num) => Separation { num, den: n0 as u128 * n1 as u128 },
            None => {
                // Scale down both parts; only reachable for enormous channels.
                let d = diff as f64;
                Separation { num: (d * d / 1e20) as u128, den: ((n0 as f64 * n1 as f64) / 1e20).max(1.0) as u128 }
            }
        };
        if best.as_ref().is_none_or(|(_, b)| sep.cmp(b) == Ordering::Greater) {
            best = Some((t as u8, sep));
        }
    }
    best.map(|(t, _)| t)
}

/// Black-and-white conversion with Otsu's threshold; foreground is every
/// sample strictly above the threshold.
pub fn binarize_otsu(ch: &ChannelMatrix) -> Result<BinaryImage, ImageError> {
    let hist = byte_histogram(ch);
    let t = otsu_threshold(&hist).ok_or(ImageError::ConstantChannel)?;
    let bits = ch.values().iter().map(|&v| quantize(v) > t).collect();
    BinaryImage::new(ch.rows(), ch.cols(), bits)
}

/// L1 Sobel gradient magnitude `|gx| + |gy|` of a 0/1 image. The one-pixel
/// border, which lacks full 3×3 support, is zero.
pub fn sobel_magnitude(bw: &BinaryImage) -> Result<ChannelMatrix, ImageError> {
    let (rows, cols) = (bw.rows(), bw.cols());
    if rows < 3 || cols < 3 {
        return Err(ImageError::TooSmall { rows, cols });
    }
    let px = |r: usize, c: usize| i32::from(bw.get(r, c));
    let mut out = ChannelMatrix::zeros(rows, cols);
    for r in 1..rows - 1 {
        for c in 1..cols - 1 {
            let gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
            let gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
            out.set(r, c, f64::from(gx.abs() + gy.abs()));
        }
    }
    Ok(out)
}

/// Edge map: any nonzero Sobel response marks an edge pixel.
pub fn sobel_edges(bw: &BinaryImage) -> Result<BinaryImage, ImageError> {
    let mag = sobel_magnitude(bw)?;
    BinaryImage::new(bw.rows(), bw.cols(), mag.values().iter().map(|&m| m > 0.0).collect())
}

/// A pixel survives iff every offset lands on foreground; outside the image
/// counts as background.
pub fn erode(bw: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    BinaryImage::from_fn(bw.rows(), bw.cols(), |r, c| {
        se.offsets()
            .iter()
            .all(|&(dr, dc)| bw.get_signed(r as isize + dr, c as isize + dc) == Some(true))
    })
}

/// A pixel is set iff some reflected offset reaches foreground; positions
/// outside the image are ignored.
pub fn dilate(bw: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    let mut out = BinaryImage::empty(bw.rows(), bw.cols());
    for r in 0..bw.rows() {
        for c in 0..bw.cols() {
            if !bw.get(r, c) {
                continue;
            }
            for &(dr, dc) in se.offsets() {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if out.get_signed(rr, cc).is_some() {
                    out.set(rr as usize, cc as usize, true);
                }
            }
        }
    }
    out
}

pub fn morph_open(bw: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    dilate(&erode(bw, se), se)
}

/// Lantuéjoul's morphological skeleton: the union over `k >= 0` of
/// `E_k \ open(E_k)`, where `E_k` is the k-fold erosion, until `E_k` is empty.
pub fn morph_skeleton(bw: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    let mut skeleton = BinaryImage::empty(bw.rows(), bw.cols());
    let mut eroded = bw.clone();
    while !eroded.is_empty() {
        let next = erode(&eroded, se);
        // open(E_k) = dilate(E_{k+1}), so the erosion is shared with the next round.
        let opened = dilate(&next, se);
        skeleton.union_with(&eroded.difference(&opened));
        eroded = next;
    }
    skeleton
}

/// Nearest-neighbor resampling with source index `floor(i * rows / new_rows)`.
pub fn resize_binary_nearest(bw: &BinaryImage, new_rows: usize, new_cols: usize) -> BinaryImage {
    assert!(new_rows > 0 && new_cols > 0, "target dimensions must be positive");
    BinaryImage::from_fn(new_rows, new_cols, |i, j| {
        bw.get(i * bw.rows() / new_rows, j * bw.cols() / new_cols)
    })
}
