//! Row-major dense matrix with the handful of kernels the model needs.
//!
//! Most kernels take a column offset so a weight acting on a concatenation
//! `[a; b]` can be applied to each part without building the concatenation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += W[:, col0..col0 + x.len()] · x`
    pub fn mul_acc(&self, col0: usize, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rows);
        debug_assert!(col0 + x.len() <= self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols + col0..r * self.cols + col0 + x.len()];
            *o += dot(row, x);
        }
    }

    /// `dx += W[:, col0..col0 + dx.len()]ᵀ · dy`
    pub fn t_mul_acc(&self, col0: usize, dy: &[f64], dx: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols + col0..r * self.cols + col0 + dx.len()];
            axpy(g, row, dx);
        }
    }

    /// `W[:, col0..col0 + x.len()] += dy · xᵀ`
    pub fn outer_acc(&mut self, col0: usize, dy: &[f64], x: &[f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        let cols = self.cols;
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols + col0..r * cols + col0 + x.len()];
            axpy(g, x, row);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value, smallest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
