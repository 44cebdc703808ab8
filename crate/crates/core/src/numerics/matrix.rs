use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored row-major. Rows index the target component,
/// columns the source direction, so `A[(i, a)]` is the derivative of the
/// i-th component along the a-th coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix must be at least 1x1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{} entries for a {}x{} matrix", data.len(), rows, cols)));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[&[f64]]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        if cols.iter().any(|col| col.len() != r) {
            return Err(Error::Dimension("ragged columns".into()));
        }
        let mut data = vec![0.0; r * c];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * c + j] = *v;
            }
        }
        Self::from_vec(r, c, data)
    }

    /// `a b^T`.
    pub fn rank_one(a: &[f64], b: &[f64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                m[(i, j)] = ai * bj;
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Column `j` of a 3-row matrix.
    pub fn column3(&self, j: usize) -> [f64; 3] {
        debug_assert_eq!(self.rows, 3);
        [self[(0, j)], self[(1, j)], self[(2, j)]]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Squared Frobenius norm, accumulated row by row.
    pub fn norm_sq(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.rows {
            let mut r = 0.0;
            for v in self.row(i) {
                r += v * v;
            }
            total += r;
        }
        total
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    #[must_use]
    pub fn swap_columns(&self, a: usize, b: usize) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows {
            m.data.swap(i * self.cols + a, i * self.cols + b);
        }
        m
    }

    #[must_use]
    pub fn swap_rows(&self, a: usize, b: usize) -> Self {
        let mut m = self.clone();
        for j in 0..self.cols {
            m.data.swap(a * self.cols + j, b * self.cols + j);
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mul_vec dimension");
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut m = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    m[(i, j)] += a * other[(k, j)];
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape());
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape());
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Mul<f64> for &Matrix {
    type Output = Matrix;
    fn mul(self, s: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * s).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }
}

/// Literal form: rows separated by `;`, entries by `,` (e.g. `1,2;3,4`).
impl FromStr for Matrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Parse("empty matrix literal".into()));
        }
        let mut rows = Vec::new();
        for row in s.split(';') {
            let entries: std::result::Result<Vec<f64>, _> = row.split(',').map(|e| e.trim().parse::<f64>()).collect();
            let entries = entries.map_err(|e| Error::Parse(format!("matrix literal '{s}': {e}")))?;
            rows.push(entries);
        }
        let c = rows[0].len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Parse(format!("matrix literal '{s}' has ragged rows")));
        }
        let r = rows.len();
        Matrix::from_vec(r, c, rows.into_iter().flatten().collect())
            .map_err(|e| Error::Parse(format!("matrix literal '{s}': {e}")))
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ";")?;
            }
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        let m: Matrix = "1,2;3,4.5;-0.1,1e-3".parse().unwrap();
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(m[(1, 1)], 4.5);
        let back: Matrix = m.to_string().parse().unwrap();
        assert_eq!(back, m);
        let scalar: Matrix = "1".parse().unwrap();
        assert_eq!(scalar.shape(), (1, 1));
    }

    #[test]
    fn malformed_literals() {
        assert!("".parse::<Matrix>().is_err());
        assert!("1,2;3".parse::<Matrix>().is_err());
        assert!("1,x".parse::<Matrix>().is_err());
        assert!("1,inf".parse::<Matrix>().is_err());
    }

    #[test]
    fn column_swap_keeps_norm_bitwise() {
        let m: Matrix = "0.1,0.7;1.3,-2.9;0.33,5.0".parse().unwrap();
        assert_eq!(m.norm_sq().to_bits(), m.swap_columns(0, 1).norm_sq().to_bits());
    }

    #[test]
    fn rank_one_and_products() {
        let m = Matrix::rank_one(&[1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(m.row(1), &[6.0, 8.0, 10.0]);
        assert_eq!(m.mul_vec(&[1.0, 0.0, 0.0]), vec![3.0, 6.0]);
        let c = Matrix::from_columns(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(c, "1,3;2,4".parse().unwrap());
        assert_eq!(c.transpose().matmul(&Matrix::identity(2)), c.transpose());
    }
}
