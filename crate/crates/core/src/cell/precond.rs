//! Inverse of the discrete Dirichlet form on interior nodes, used as the
//! descent metric.

use std::f64::consts::PI;

use crate::numerics::Grid;

/// `P = (2 / n^m) G`, with `G` the Gram operator of the cell gradient
/// restricted to zero-boundary fields.
#[derive(Clone, Debug)]
pub(crate) enum Preconditioner {
    /// m = 1: tridiagonal `(2, -1) / h^2`, solved by the Thomas algorithm.
    Tridiagonal { interior: usize, diag: f64, off: f64 },
    /// m >= 2: diagonal in the discrete sine basis.
    Sine { interior: usize, dim: usize, table: Vec<f64>, inv_eig: Vec<f64> },
    /// No interior nodes.
    Empty,
}

impl Preconditioner {
    pub(crate) fn new(grid: &Grid) -> Self {
        let n = grid.nodes_per_side();
        let m = grid.dim();
        if n < 2 {
            return Preconditioner::Empty;
        }
        let l = n - 1;
        let h = grid.spacing();
        let scale = 2.0 / (n as f64).powi(m as i32);
        if m == 1 {
            return Preconditioner::Tridiagonal { interior: l, diag: scale * 2.0 / (h * h), off: -scale / (h * h) };
        }
        let mut table = vec![0.0; l * l];
        for k in 0..l {
            for j in 0..l {
                table[k * l + j] = (PI * ((k + 1) * (j + 1)) as f64 / n as f64).sin();
            }
        }
        let lam: Vec<f64> = (1..=l).map(|k| 4.0 / (h * h) * (PI * k as f64 / (2.0 * n as f64)).sin().powi(2)).collect();
        let mu: Vec<f64> = (1..=l).map(|k| (PI * k as f64 / (2.0 * n as f64)).cos().powi(2)).collect();
        let total = l.pow(m as u32);
        let norm = (2.0 / n as f64).powi(m as i32);
        let mut inv_eig = vec![0.0; total];
        let mut idx = vec![0usize; m];
        for (flat, slot) in inv_eig.iter_mut().enumerate() {
            let mut r = flat;
            for i in idx.iter_mut() {
                *i = r % l;
                r /= l;
            }
            let mut eig = 0.0;
            for a in 0..m {
                let mut term = lam[idx[a]];
                for b in (0..m).filter(|&b| b != a) {
                    term *= mu[idx[b]];
                }
                eig += term;
            }
            *slot = norm / (scale * eig);
        }
        Preconditioner::Sine { interior: l, dim: m, table, inv_eig }
    }

    /// In-place `x <- P^{-1} x` on an interior block (axis 0 fastest).
    pub(crate) fn solve(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            Preconditioner::Empty => {}
            Preconditioner::Tridiagonal { interior, diag, off } => {
                let n = *interior;
                scratch.clear();
                scratch.resize(n, 0.0);
                let c = scratch;
                // forward sweep
                let mut denom = *diag;
                c[0] = off / denom;
                x[0] /= denom;
                for i in 1..n {
                    denom = diag - off * c[i - 1];
                    c[i] = off / denom;
                    x[i] = (x[i] - off * x[i - 1]) / denom;
                }
                for i in (0..n.saturating_sub(1)).rev() {
                    x[i] -= c[i] * x[i + 1];
                }
            }
            Preconditioner::Sine { interior, dim, table, inv_eig } => {
                let l = *interior;
                for a in 0..*dim {
                    sine_along_axis(x, l, *dim, a, table, scratch);
                }
                for (v, w) in x.iter_mut().zip(inv_eig) {
                    *v *= w;
                }
                for a in 0..*dim {
                    sine_along_axis(x, l, *dim, a, table, scratch);
                }
            }
        }
    }
}

fn sine_along_axis(x: &mut [f64], l: usize, dim: usize, axis: usize, table: &[f64], buf: &mut Vec<f64>) {
    let stride = l.pow(axis as u32);
    let lines = l.pow(dim as u32 - 1);
    buf.clear();
    buf.resize(2 * l, 0.0);
    let (line, out) = buf.split_at_mut(l);
    for q in 0..lines {
        let lo = q % stride;
        let hi = q / stride;
        let start = lo + hi * stride * l;
        for j in 0..l {
            line[j] = x[start + j * stride];
        }
        for k in 0..l {
            let row = &table[k * l..(k + 1) * l];
            out[k] = row.iter().zip(line.iter()).map(|(s, v)| s * v).sum();
        }
        for k in 0..l {
            x[start + k * stride] = out[k];
        }
    }
}
