//! Eigenvalues of a dense real matrix: balancing, Householder reduction to
//! upper Hessenberg form, then Francis double-shift QR iteration with
//! deflation down to the real Schur form. Eigenvectors are never formed.

use num_complex::Complex64;

use super::NumericsError;
use crate::imagecore::ChannelMatrix;

/// Row-major square scratch matrix.
struct Square {
    n: usize,
    a: Vec<f64>,
}

impl Square {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }
}

/// Similarity scaling by powers of two so row and column norms are
/// comparable. Exact in floating point.
fn balance(m: &mut Square) {
    const RADIX: f64 = 2.0;
    let n = m.n;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                c += m.at(j, i).abs();
                r += m.at(i, j).abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    *m.at_mut(i, j) *= inv;
                    *m.at_mut(j, i) *= f;
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form (orthogonal similarity).
fn hessenberg(m: &mut Square) {
    let n = m.n;
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for col in 1..high {
        let scale: f64 = (col..=high).map(|i| m.at(i, col - 1).abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut h = 0.0;
        for i in (col..=high).rev() {
            ort[i] = m.at(i, col - 1) / scale;
            h += ort[i] * ort[i];
        }
        let mut g = h.sqrt();
        if ort[col] > 0.0 {
            g = -g;
        }
        h -= ort[col] * g;
        ort[col] -= g;

        // H = (I - u u'/h) H (I - u u'/h)
        for j in col..n {
            let f = (col..=high).rev().map(|i| ort[i] * m.at(i, j)).sum::<f64>() / h;
            for i in col..=high {
                *m.at_mut(i, j) -= f * ort[i];
            }
        }
        for i in 0..=high {
            let f = (col..=high).rev().map(|j| ort[j] * m.at(i, j)).sum::<f64>() / h;
            for j in col..=high {
                *m.at_mut(i, j) -= f * ort[j];
            }
        }
        *m.at_mut(col, col - 1) = scale * g;
        for i in col + 1..n {
            *m.at_mut(i, col - 1) = 0.0;
        }
    }
}

#[inline]
fn with_sign(magnitude: f64, sign_of: f64) -> f64 {
    if sign_of >= 0.0 {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix. Destroys `m`.
fn hessenberg_qr(m: &mut Square, max_iterations: usize) -> Result<Vec<Complex64>, NumericsError> {
    let n = m.n;
    let mut eig = vec![Complex64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += m.at(i, j).abs();
        }
    }

    let mut total_iterations = 0usize;
    let mut shift_acc = 0.0;
    let mut nn = n as isize - 1;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let top = nn as usize;
            // Find the lowest negligible subdiagonal entry.
            let mut l = top;
            while l >= 1 {
                let mut s = m.at(l - 1, l - 1).abs() + m.at(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if m.at(l, l - 1).abs() + s == s {
                    *m.at_mut(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }

            let mut x = m.at(top, top);
            if l == top {
                // 1x1 block deflates.
                eig[top] = Complex64::new(x + shift_acc, 0.0);
                nn -= 1;
                break;
            }
            let mut y = m.at(top - 1, top - 1);
            let mut w = m.at(top, top - 1) * m.at(top - 1, top);
            if l == top - 1 {
                // 2x2 block: a real pair or a complex-conjugate pair.
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += shift_acc;
                if q >= 0.0 {
                    let z = p + with_sign(z, p);
                    eig[top - 1] = Complex64::new(x + z, 0.0);
                    eig[top] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                } else {
                    eig[top - 1] = Complex64::new(x + p, -z);
                    eig[top] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }

            if total_iterations >= max_iterations {
                return Err(NumericsError::NoConvergence(max_iterations));
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift to break cycles.
                shift_acc += x;
                for i in 0..=top {
                    *m.at_mut(i, i) -= x;
                }
                let s = m.at(top, top - 1).abs() + m.at(top - 1, top - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_iterations += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut mm = top - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = m.at(mm, mm);
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / m.at(mm + 1, mm) + m.at(mm, mm + 1);
                q = m.at(mm + 1, mm + 1) - z - rr - ss;
                r = m.at(mm + 2, mm + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mm == l {
                    break;
                }
                let u = m.at(mm, mm - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (m.at(mm - 1, mm - 1).abs() + z.abs() + m.at(mm + 1, mm + 1).abs());
                if u + v == v {
                    break;
                }
                mm -= 1;
            }
            for i in mm + 2..=top {
                *m.at_mut(i, i - 2) = 0.0;
                if i != mm + 2 {
                    *m.at_mut(i, i - 3) = 0.0;
                }
            }

            // Double QR step on rows l..=top and columns mm..=top.
            let mut scale = 0.0;
            for k in mm..top {
                if k != mm {
                    p = m.at(k, k - 1);
                    q = m.at(k + 1, k - 1);
                    r = if k != top - 1 { m.at(k + 2, k - 1) } else { 0.0 };
                    scale = p.abs() + q.abs() + r.abs();
                    if scale != 0.0 {
                        p /= scale;
                        q /= scale;
                        r /= scale;
                    }
                }
                let s = with_sign((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == mm {
                    if l != mm {
                        *m.at_mut(k, k - 1) = -m.at(k, k - 1);
                    }
                } else {
                    *m.at_mut(k, k - 1) = -s * scale;
                }
                p += s;
                let xk = p / s;
                let yk = q / s;
                let zk = r / s;
                q /= p;
                r /= p;
                for j in k..=top {
                    let mut pj = m.at(k, j) + q * m.at(k + 1, j);
                    if k != top - 1 {
                        pj += r * m.at(k + 2, j);
                        *m.at_mut(k + 2, j) -= pj * zk;
                    }
                    *m.at_mut(k + 1, j) -= pj * yk;
                    *m.at_mut(k, j) -= pj * xk;
                }
                let last_row = top.min(k + 3);
                for i in l..=last_row {
                    let mut pi = xk * m.at(i, k) + yk * m.at(i, k + 1);
                    if k != top - 1 {
                        pi += zk * m.at(i, k + 2);
                        *m.at_mut(i, k + 2) -= pi * r;
                    }
                    *m.at_mut(i, k + 1) -= pi * q;
                    *m.at_mut(i, k) -= pi;
                }
            }
        }
    }
    Ok(eig)
}

/// All eigenvalues of a square real matrix. Complex eigenvalues come in
/// conjugate pairs. The iteration budget is `100 * n` QR sweeps in total.
pub fn eigenvalues(m: &ChannelMatrix) -> Result<Vec<Complex64>, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let n = m.rows();
    let mut work = Square { n, a: m.values().to_vec() };
    if n == 1 {
        return Ok(vec![Complex64::new(work.a[0], 0.0)]);
    }
    balance(&mut work);
    hessenberg(&mut work);
    hessenberg_qr(&mut work, 100 * n)
}

/// `max |λ|` over the (possibly complex) eigenvalues.
pub fn spectral_radius(m: &ChannelMatrix) -> Result<f64, NumericsError> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}
