use std::f64::consts::FRAC_1_SQRT_2;

use super::NumericsError;
use crate::imagecore::ChannelMatrix;

/// Orthonormal Haar analysis step:
/// `a_i = (x_2i + x_2i+1)/√2`, `d_i = (x_2i - x_2i+1)/√2`.
pub fn haar_forward_1d(signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
    if signal.is_empty() || signal.len() % 2 != 0 {
        return Err(NumericsError::OddLength(signal.len()));
    }
    let mut approx = vec![0.0; signal.len() / 2];
    let mut detail = vec![0.0; signal.len() / 2];
    forward_into(signal, &mut approx, &mut detail);
    Ok((approx, detail))
}

pub fn haar_inverse_1d(approx: &[f64], detail: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if approx.len() != detail.len() {
        return Err(NumericsError::LengthMismatch(approx.len(), detail.len()));
    }
    let mut out = vec![0.0; approx.len() * 2];
    inverse_into(approx, detail, &mut out);
    Ok(out)
}

#[inline]
fn forward_into(signal: &[f64], approx: &mut [f64], detail: &mut [f64]) {
    for (i, pair) in signal.chunks_exact(2).enumerate() {
        approx[i] = (pair[0] + pair[1]) * FRAC_1_SQRT_2;
        detail[i] = (pair[0] - pair[1]) * FRAC_1_SQRT_2;
    }
}

#[inline]
fn inverse_into(approx: &[f64], detail: &[f64], out: &mut [f64]) {
    for i in 0..approx.len() {
        out[2 * i] = (approx[i] + detail[i]) * FRAC_1_SQRT_2;
        out[2 * i + 1] = (approx[i] - detail[i]) * FRAC_1_SQRT_2;
    }
}

/// The three detail quadrants produced at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    /// Top-right quadrant: high-pass along rows, low-pass along columns.
    pub hl: ChannelMatrix,
    /// Bottom-left quadrant: low-pass along rows, high-pass along columns.
    pub lh: ChannelMatrix,
    pub hh: ChannelMatrix,
}

impl DetailBands {
    fn zeroed(side: usize) -> Self {
        Self {
            hl: ChannelMatrix::zeros(side, side),
            lh: ChannelMatrix::zeros(side, side),
            hh: ChannelMatrix::zeros(side, side),
        }
    }
}

/// Multi-level 2D Haar pyramid. `details[0]` is level 1 (finest).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub approx: ChannelMatrix,
    pub details: Vec<DetailBands>,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// All sub-bands in canonical order: the approximation first, then
    /// HL, LH, HH for levels 1 through L.
    pub fn matrices(&self) -> Vec<&ChannelMatrix> {
        std::iter::once(&self.approx)
            .chain(self.details.iter().flat_map(|d| [&d.hl, &d.lh, &d.hh]))
            .collect()
    }

    /// Replaces every detail band with zeros, keeping only the approximation.
    pub fn zero_details(&mut self) {
        for d in &mut self.details {
            *d = DetailBands::zeroed(d.hl.rows());
        }
    }

    pub fn energy(&self) -> f64 {
        self.matrices().iter().map(|m| m.sum_of_squares()).sum()
    }
}

/// One analysis level on a square block: rows first, then columns. Returns
/// (LL, HL, LH, HH).
fn analyze_level(
    m: &ChannelMatrix,
) -> (ChannelMatrix, ChannelMatrix, ChannelMatrix, ChannelMatrix) {
    let n = m.rows();
    let h = n / 2;
    let mut tmp = ChannelMatrix::zeros(n, n);
    {
        let out = tmp.values_mut();
        let mut a = vec![0.0; h];
        let mut d = vec![0.0; h];
        for r in 0..n {
            forward_into(m.row(r), &mut a, &mut d);
            out[r * n..r * n + h].copy_from_slice(&a);
            out[r * n + h..(r + 1) * n].copy_from_slice(&d);
        }
    }
    let mut coeffs = ChannelMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    let mut a = vec![0.0; h];
    let mut d = vec![0.0; h];
    for c in 0..n {
        for r in 0..n {
            col[r] = tmp.get(r, c);
        }
        forward_into(&col, &mut a, &mut d);
        for r in 0..h {
            coeffs.set(r, c, a[r]);
            coeffs.set(r + h, c, d[r]);
        }
    }
    (
        coeffs.block(0, 0, h, h),
        coeffs.block(0, h, h, h),
        coeffs.block(h, 0, h, h),
        coeffs.block(h, h, h, h),
    )
}

fn synthesize_level(ll: &ChannelMatrix, bands: &DetailBands) -> ChannelMatrix {
    let h = ll.rows();
    let n = 2 * h;
    let coeffs = ChannelMatrix::from_fn(n, n, |r, c| match (r < h, c < h) {
        (true, true) => ll.get(r, c),
        (true, false) => bands.hl.get(r, c - h),
        (false, true) => bands.lh.get(r - h, c),
        (false, false) => bands.hh.get(r - h, c - h),
    });
    let mut tmp = ChannelMatrix::zeros(n, n);
    let mut a = vec![0.0; h];
    let mut d = vec![0.0; h];
    let mut col = vec![0.0; n];
    for c in 0..n {
        for r in 0..h {
            a[r] = coeffs.get(r, c);
            d[r] = coeffs.get(r + h, c);
        }
        inverse_into(&a, &d, &mut col);
        for r in 0..n {
            tmp.set(r, c, col[r]);
        }
    }
    let mut out = ChannelMatrix::zeros(n, n);
    for r in 0..n {
        let row = tmp.row(r);
        let (a, d) = row.split_at(h);
        inverse_into(a, d, &mut out.values_mut()[r * n..(r + 1) * n]);
    }
    out
}

/// `levels`-deep 2D Haar decomposition of a square matrix whose side is a
/// multiple of `2^levels`. Only the LL quadrant is decomposed further.
pub fn dwt2_multilevel(
    ch: &ChannelMatrix,
    levels: usize,
) -> Result<WaveletDecomposition, NumericsError> {
    if !ch.is_square() {
        return Err(NumericsError::NotSquare { rows: ch.rows(), cols: ch.cols() });
    }
    if levels == 0 {
        return Err(NumericsError::ZeroLevels);
    }
    let side = ch.rows();
    if levels >= usize::BITS as usize || side % (1usize << levels) != 0 {
        return Err(NumericsError::NotDivisible { side, levels });
    }
    let mut current = ch.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (ll, hl, lh, hh) = analyze_level(&current);
        details.push(DetailBands { hl, lh, hh });
        current = ll;
    }
    Ok(WaveletDecomposition { approx: current, details })
}

/// Inverse of [`dwt2_multilevel`].
pub fn idwt2(dec: &WaveletDecomposition) -> Result<ChannelMatrix, NumericsError> {
    if dec.details.is_empty() {
        return Err(NumericsError::MalformedPyramid("no detail levels".into()));
    }
    if !dec.approx.is_square() {
        return Err(NumericsError::MalformedPyramid("approximation is not square".into()));
    }
    let mut current = dec.approx.clone();
    for (level, bands) in dec.details.iter().enumerate().rev() {
        let side = current.rows();
        for (name, m) in [("HL", &bands.hl), ("LH", &bands.lh), ("HH", &bands.hh)] {
            if (m.rows(), m.cols()) != (side, side) {
                return Err(NumericsError::MalformedPyramid(format!(
                    "level {} {name} is {}x{}, expected {side}x{side}",
                    level + 1,
                    m.rows(),
                    m.cols()
                )));
            }
        }
        current = synthesize_level(&current, bands);
    }
    Ok(current)
}
