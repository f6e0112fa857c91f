use num_complex::Complex64;

use super::NumericsError;
use crate::imagecore::ChannelMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must equal rows * cols");
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.norm()).collect()
    }
}

/// Iterative radix-2 Cooley-Tukey transform, forward and unnormalized.
/// `data.len()` must be a power of two.
pub fn fft_in_place(data: &mut [Complex64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "FFT length must be a power of two");
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * std::f64::consts::PI / len as f64;
        // Twiddles computed directly per index; accumulating them by repeated
        // multiplication drifts by ~1e-13 at n = 128.
        let twiddles: Vec<Complex64> =
            (0..half).map(|k| Complex64::from_polar(1.0, step * k as f64)).collect();
        for chunk in data.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for k in 0..half {
                let t = hi[k] * twiddles[k];
                hi[k] = lo[k] - t;
                lo[k] += t;
            }
        }
        len <<= 1;
    }
}

/// Unnormalized forward 2D DFT: row transforms followed by column transforms.
pub fn fft2(ch: &ChannelMatrix) -> Result<ComplexMatrix, NumericsError> {
    let (rows, cols) = (ch.rows(), ch.cols());
    if !rows.is_power_of_two() || !cols.is_power_of_two() {
        return Err(NumericsError::NotPowerOfTwo { rows, cols });
    }
    let mut entries: Vec<Complex64> = ch.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in entries.chunks_exact_mut(cols) {
        fft_in_place(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = entries[r * cols + c];
        }
        fft_in_place(&mut column);
        for r in 0..rows {
            entries[r * cols + c] = column[r];
        }
    }
    Ok(ComplexMatrix { rows, cols, entries })
}

/// Swaps quadrants so the zero-frequency term lands at `(rows/2, cols/2)`.
pub fn fftshift(cm: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    let (rows, cols) = (cm.rows, cm.cols);
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(NumericsError::OddDims { rows, cols });
    }
    let mut entries = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        let rr = (r + rows / 2) % rows;
        for c in 0..cols {
            let cc = (c + cols / 2) % cols;
            entries[rr * cols + cc] = cm.entries[r * cols + c];
        }
    }
    Ok(ComplexMatrix { rows, cols, entries })
}
