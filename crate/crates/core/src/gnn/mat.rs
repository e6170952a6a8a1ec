//! Dense row-major f64 matrices with the handful of kernels the trainer
//! needs. Products that sum over nodes take an explicit visiting order.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match {rows}x{cols}");
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `self · b`. Each output row depends only on the matching input row.
    pub fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (x, &w) in o.iter_mut().zip(b.row(k)) {
                    *x += a * w;
                }
            }
        }
        out
    }

    /// `self · bᵀ`.
    pub fn matmul_t(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "matmul_t shape mismatch");
        let mut out = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..b.rows {
                out.data[i * b.rows + k] = a.iter().zip(b.row(k)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `selfᵀ · b`, summing rows in `order`.
    pub fn t_matmul_ordered(&self, b: &Mat, order: &[usize]) -> Mat {
        assert_eq!(self.rows, b.rows, "t_matmul shape mismatch");
        let mut out = Mat::zeros(self.cols, b.cols);
        for &i in order {
            let brow = b.row(i);
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (x, &w) in out.data[k * b.cols..(k + 1) * b.cols].iter_mut().zip(brow) {
                    *x += a * w;
                }
            }
        }
        out
    }

    /// Column sums, accumulating rows in `order`.
    pub fn col_sums_ordered(&self, order: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for &i in order {
            for (x, &v) in out.iter_mut().zip(self.row(i)) {
                *x += v;
            }
        }
        out
    }
}
