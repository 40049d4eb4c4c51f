//! Dense row-major 2-D arrays of f64 with the handful of kernels the tape
//! needs. Zero-row matrices are valid (empty edge sets produce them).

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(data.len(), rows * cols, "flat data does not match shape");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged row");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn scalar(value: f64) -> Matrix {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// self += k * other
    pub fn axpy(&mut self, k: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn scale_in_place(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// self · other
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    /// dst += self · otherᵀ
    pub fn matmul_nt_into(&self, other: &Matrix, dst: &mut Matrix) {
        debug_assert_eq!(self.cols, other.cols);
        debug_assert_eq!(dst.shape(), (self.rows, other.rows));
        for i in 0..self.rows {
            let arow = self.row(i);
            let drow = dst.row_mut(i);
            for (k, d) in drow.iter_mut().enumerate() {
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let mut acc = 0.0;
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                *d += acc;
            }
        }
    }

    /// dst += selfᵀ · other
    pub fn matmul_tn_into(&self, other: &Matrix, dst: &mut Matrix) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(dst.shape(), (self.cols, other.cols));
        for i in 0..self.rows {
            let arow = self.row(i);
            let brow = other.row(i);
            for (k, &aik) in arow.iter().enumerate() {
                let drow = dst.row_mut(k);
                for (d, &b) in drow.iter_mut().zip(brow) {
                    *d += aik * b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_flat(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
    }

    /// Naive triple-loop oracle in ijk order.
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 7, 5);
        let b = random_matrix(&mut rng, 5, 3);
        let fast = a.matmul(&b);
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_variants_match_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 4, 6);
        let b = random_matrix(&mut rng, 5, 6);
        // a · bᵀ
        let mut nt = Matrix::zeros(4, 5);
        a.matmul_nt_into(&b, &mut nt);
        let mut bt = Matrix::zeros(6, 5);
        for i in 0..5 {
            for j in 0..6 {
                bt.set(j, i, b.get(i, j));
            }
        }
        let expected = a.matmul(&bt);
        for (x, y) in nt.data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        // cᵀ · d with c: 6x4, d: 6x3
        let c = random_matrix(&mut rng, 6, 4);
        let d = random_matrix(&mut rng, 6, 3);
        let mut tn = Matrix::zeros(4, 3);
        c.matmul_tn_into(&d, &mut tn);
        let mut ct = Matrix::zeros(4, 6);
        for i in 0..6 {
            for j in 0..4 {
                ct.set(j, i, c.get(i, j));
            }
        }
        let expected = ct.matmul(&d);
        for (x, y) in tn.data().iter().zip(expected.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_matrices_are_valid() {
        let empty = Matrix::zeros(0, 5);
        let w = Matrix::zeros(5, 3);
        let out = empty.matmul(&w);
        assert_eq!(out.shape(), (0, 3));
    }
}
