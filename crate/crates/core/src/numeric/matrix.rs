use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
///
/// Batched layers use one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies columns `[start, start + width)` of every row into a new matrix.
    pub fn column_slice(&self, start: usize, width: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hconcat(parts: &[&Matrix]) -> Matrix {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            let dst = out.row_mut(r);
            for p in parts {
                debug_assert_eq!(p.rows, rows);
                dst[offset..offset + p.cols].copy_from_slice(p.row(r));
                offset += p.cols;
            }
        }
        out
    }
}

/// `x · wᵀ` where `x` is `B×t` and `w` is a row-major `m×t` weight: returns `B×m`.
pub(crate) fn matmul_transposed(x: &Matrix, w: &[f64], m: usize) -> Matrix {
    let t = x.cols;
    debug_assert_eq!(w.len(), m * t);
    let mut out = Matrix::zeros(x.rows, m);
    if x.rows == 0 || m == 0 || t == 0 {
        return out;
    }
    // SAFETY: dimensions and strides describe the buffers exactly.
    unsafe {
        matrixmultiply::dgemm(
            x.rows,
            t,
            m,
            1.0,
            x.data.as_ptr(),
            t as isize,
            1,
            w.as_ptr(),
            1,
            t as isize,
            0.0,
            out.data.as_mut_ptr(),
            m as isize,
            1,
        );
    }
    out
}

/// `grad_w += dyᵀ · x` for `dy: B×m`, `x: B×t`, `grad_w: m×t`.
pub(crate) fn accumulate_outer(dy: &Matrix, x: &Matrix, grad_w: &mut [f64]) {
    let (b, m, t) = (dy.rows, dy.cols, x.cols);
    debug_assert_eq!(x.rows, b);
    debug_assert_eq!(grad_w.len(), m * t);
    if b == 0 || m == 0 || t == 0 {
        return;
    }
    // SAFETY: dimensions and strides describe the buffers exactly.
    unsafe {
        matrixmultiply::dgemm(
            m,
            b,
            t,
            1.0,
            dy.data.as_ptr(),
            1,
            m as isize,
            x.data.as_ptr(),
            t as isize,
            1,
            1.0,
            grad_w.as_mut_ptr(),
            t as isize,
            1,
        );
    }
}

/// `dy · w` for `dy: B×m` and row-major `w: m×t`: returns `B×t`.
pub(crate) fn matmul(dy: &Matrix, w: &[f64], t: usize) -> Matrix {
    let (b, m) = (dy.rows, dy.cols);
    debug_assert_eq!(w.len(), m * t);
    let mut out = Matrix::zeros(b, t);
    if b == 0 || m == 0 || t == 0 {
        return out;
    }
    // SAFETY: dimensions and strides describe the buffers exactly.
    unsafe {
        matrixmultiply::dgemm(
            b,
            m,
            t,
            1.0,
            dy.data.as_ptr(),
            m as isize,
            1,
            w.as_ptr(),
            t as isize,
            1,
            0.0,
            out.data.as_mut_ptr(),
            t as isize,
            1,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_nt(x: &Matrix, w: &[f64], m: usize) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), m);
        for b in 0..x.rows() {
            for o in 0..m {
                let mut s = 0.0;
                for i in 0..x.cols() {
                    s += x.get(b, i) * w[o * x.cols() + i];
                }
                out.row_mut(b)[o] = s;
            }
        }
        out
    }

    #[test]
    fn gemm_helpers_match_naive_loops() {
        let x = Matrix::from_vec(3, 4, (0..12).map(|v| v as f64 * 0.5 - 2.0).collect()).unwrap();
        let w: Vec<f64> = (0..8).map(|v| (v as f64).sin()).collect();
        let y = matmul_transposed(&x, &w, 2);
        let expect = naive_nt(&x, &w, 2);
        for (a, b) in y.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }

        let dy = Matrix::from_vec(3, 2, vec![1.0, -1.0, 0.5, 2.0, 0.0, 3.0]).unwrap();
        let mut gw = vec![1.0; 8];
        accumulate_outer(&dy, &x, &mut gw);
        for o in 0..2 {
            for i in 0..4 {
                let s: f64 = (0..3).map(|b| dy.get(b, o) * x.get(b, i)).sum();
                assert!((gw[o * 4 + i] - (1.0 + s)).abs() < 1e-12);
            }
        }

        let dx = matmul(&dy, &w, 4);
        for b in 0..3 {
            for i in 0..4 {
                let s: f64 = (0..2).map(|o| dy.get(b, o) * w[o * 4 + i]).sum();
                assert!((dx.get(b, i) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn hconcat_and_column_slice_are_inverse() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![5.0, 6.0]).unwrap();
        let c = Matrix::hconcat(&[&a, &b]);
        assert_eq!(c.as_slice(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.column_slice(0, 2), a);
        assert_eq!(c.column_slice(2, 1), b);
    }
}
