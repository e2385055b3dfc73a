//! Dense complex matrices, row-major. Just enough linear algebra for the
//! channel model; nothing here allocates per element.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("CMatrix::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// `col · rowᵀ` (no conjugation).
    pub fn outer(col: &[C64], row: &[C64]) -> Self {
        Self::from_fn(col.len(), row.len(), |r, c| col[r] * row[c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · x` (no conjugation).
    pub fn tr_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (r, xr) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// `aᴴ b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sq(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Kronecker product of two vectors; index `i * b.len() + j`.
pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

/// Splits complex values into `[re..., im...]`.
pub fn to_re_im(z: &[C64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * z.len());
    out.extend(z.iter().map(|c| c.re));
    out.extend(z.iter().map(|c| c.im));
    out
}

/// Inverse of [`to_re_im`].
pub fn from_re_im(x: &[f64]) -> Vec<C64> {
    let n = x.len() / 2;
    (0..n).map(|i| C64::new(x[i], x[n + i])).collect()
}
