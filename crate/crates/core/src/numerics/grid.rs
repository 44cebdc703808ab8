use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Uniform axis-aligned grid on the cube `(0, side_length)^dim`.
/// `nodes_per_side` counts intervals per axis, so each axis carries
/// `nodes_per_side + 1` nodes including both faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    side_length: f64,
    nodes_per_side: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, side_length: f64, nodes_per_side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("grid dimension must be >= 1".into()));
        }
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(Error::InvalidParameter(format!("side length {side_length}")));
        }
        if nodes_per_side == 0 {
            return Err(Error::InvalidParameter("nodes_per_side must be >= 1".into()));
        }
        Ok(Grid { dim, side_length, nodes_per_side, spacing: side_length / nodes_per_side as f64 })
    }

    /// Grid on `(0,t)^dim` with `per_unit` intervals per unit length.
    /// Requires `t * per_unit` to be an integer.
    pub fn per_unit(dim: usize, t: f64, per_unit: usize) -> Result<Self> {
        let n = t * per_unit as f64;
        let rounded = n.round();
        if (n - rounded).abs() > 1e-9 * n.max(1.0) || rounded < 1.0 {
            return Err(Error::InvalidParameter(format!("side length {t} is not a multiple of 1/{per_unit}")));
        }
        Self::new(dim, t, rounded as usize)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn nodes_per_side(&self) -> usize {
        self.nodes_per_side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_side + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn cell_count(&self) -> usize {
        self.nodes_per_side.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Axis 0 varies fastest.
    pub fn node_index(&self, idx: &[usize]) -> usize {
        let p = self.nodes_per_axis();
        idx.iter().rev().fold(0, |acc, &i| acc * p + i)
    }

    pub fn node_multi_index(&self, mut node: usize, out: &mut [usize]) {
        let p = self.nodes_per_axis();
        for o in out.iter_mut() {
            *o = node % p;
            node /= p;
        }
    }

    pub fn cell_multi_index(&self, mut cell: usize, out: &mut [usize]) {
        let n = self.nodes_per_side;
        for o in out.iter_mut() {
            *o = cell % n;
            cell /= n;
        }
    }

    pub fn node_coords(&self, node: usize, out: &mut [f64]) {
        let p = self.nodes_per_axis();
        let mut k = node;
        for o in out.iter_mut() {
            *o = (k % p) as f64 * self.spacing;
            k /= p;
        }
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let p = self.nodes_per_axis();
        let mut k = node;
        for _ in 0..self.dim {
            let i = k % p;
            if i == 0 || i == self.nodes_per_side {
                return true;
            }
            k /= p;
        }
        false
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| !self.is_boundary_node(n)).collect()
    }
}

/// Nodal vector field on a [`Grid`], stored node-major:
/// `values[node * components + component]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: Grid,
    components: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        let len = grid.node_count() * components;
        GridField { grid, components, values: vec![0.0; len] }
    }

    pub fn from_values(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::Dimension("field needs at least one component".into()));
        }
        if values.len() != grid.node_count() * components {
            return Err(Error::Dimension(format!(
                "{} values for {} nodes x {} components",
                values.len(),
                grid.node_count(),
                components
            )));
        }
        Ok(GridField { grid, components, values })
    }

    /// Samples `f` at every node (boundary included).
    pub fn from_fn(grid: Grid, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut field = Self::zeros(grid, components);
        let mut x = vec![0.0; field.grid.dim()];
        for node in 0..field.grid.node_count() {
            field.grid.node_coords(node, &mut x);
            let v = f(&x);
            assert_eq!(v.len(), components, "from_fn component count");
            field.values[node * components..(node + 1) * components].copy_from_slice(&v);
        }
        field
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.components + comp]
    }

    pub fn set(&mut self, node: usize, comp: usize, v: f64) {
        self.values[node * self.components + comp] = v;
    }

    pub fn boundary_is_zero(&self) -> bool {
        (0..self.grid.node_count())
            .filter(|&n| self.grid.is_boundary_node(n))
            .all(|n| self.values[n * self.components..(n + 1) * self.components].iter().all(|v| *v == 0.0))
    }

    pub fn zero_boundary(&mut self) {
        for n in 0..self.grid.node_count() {
            if self.grid.is_boundary_node(n) {
                self.values[n * self.components..(n + 1) * self.components].fill(0.0);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Plain-text dump. Values use the shortest representation that parses
    /// back to the same bits, so `from_text(to_text())` is exact.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "gridfield dim={} side_length={} nodes_per_side={} components={}\n",
            self.grid.dim(),
            self.grid.side_length(),
            self.grid.nodes_per_side(),
            self.components
        );
        for node in 0..self.grid.node_count() {
            let row = &self.values[node * self.components..(node + 1) * self.components];
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field dump".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("gridfield") {
            return Err(Error::Parse("missing 'gridfield' header".into()));
        }
        let (mut dim, mut side, mut nps, mut comps) = (None, None, None, None);
        for kv in parts {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field '{kv}'")))?;
            let bad = |_| Error::Parse(format!("bad header value '{kv}'"));
            match k {
                "dim" => dim = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "side_length" => side = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "nodes_per_side" => nps = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "components" => comps = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(Error::Parse(format!("unknown header field '{k}'"))),
            }
        }
        let missing = || Error::Parse("incomplete gridfield header".into());
        let grid = Grid::new(dim.ok_or_else(missing)?, side.ok_or_else(missing)?, nps.ok_or_else(missing)?)?;
        let comps = comps.ok_or_else(missing)?;
        let mut values = Vec::with_capacity(grid.node_count() * comps);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            for v in line.split(',') {
                values.push(v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("value '{v}': {e}")))?);
            }
        }
        Self::from_values(grid, comps, values)
    }
}

/// Per-cell corner lists and midpoints of a grid, with the local difference,
/// averaging and adjoint (scatter) operators.
#[derive(Clone, Debug)]
pub struct Stencil {
    dim: usize,
    corners_per_cell: usize,
    corners: Vec<usize>,
    midpoints: Vec<f64>,
    grad_scale: f64,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let m = grid.dim();
        let k = 1usize << m;
        let cells = grid.cell_count();
        let h = grid.spacing();
        let mut corners = Vec::with_capacity(cells * k);
        let mut midpoints = Vec::with_capacity(cells * m);
        let mut idx = vec![0usize; m];
        let mut cidx = vec![0usize; m];
        for cell in 0..cells {
            grid.cell_multi_index(cell, &mut idx);
            for c in 0..k {
                for a in 0..m {
                    cidx[a] = idx[a] + ((c >> a) & 1);
                }
                corners.push(grid.node_index(&cidx));
            }
            midpoints.extend(idx.iter().map(|&i| (i as f64 + 0.5) * h));
        }
        let grad_scale = 1.0 / ((k / 2) as f64 * h);
        Stencil { dim: m, corners_per_cell: k, corners, midpoints, grad_scale }
    }

    pub fn cell_count(&self) -> usize {
        self.midpoints.len() / self.dim
    }

    pub fn corners(&self, cell: usize) -> &[usize] {
        &self.corners[cell * self.corners_per_cell..(cell + 1) * self.corners_per_cell]
    }

    pub fn midpoint(&self, cell: usize) -> &[f64] {
        &self.midpoints[cell * self.dim..(cell + 1) * self.dim]
    }

    /// Average of the corner values of every component.
    pub fn corner_average(&self, values: &[f64], n: usize, cell: usize, out: &mut [f64]) {
        let cs = self.corners(cell);
        if self.dim == 2 {
            // pairing the diagonals keeps the result invariant under the axis swap
            for (i, o) in out.iter_mut().enumerate() {
                let v = |c: usize| values[cs[c] * n + i];
                *o = ((v(0) + v(3)) + (v(1) + v(2))) * 0.25;
            }
            return;
        }
        let w = 1.0 / self.corners_per_cell as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &c in cs {
                acc += values[c * n + i];
            }
            *o = acc * w;
        }
    }

    /// Corner differences along each axis, averaged over the parallel edges.
    pub fn cell_gradient(&self, values: &[f64], n: usize, cell: usize, out: &mut Matrix) {
        let cs = self.corners(cell);
        for i in 0..n {
            for a in 0..self.dim {
                let bit = 1 << a;
                let mut acc = 0.0;
                for c in (0..self.corners_per_cell).filter(|c| c & bit == 0) {
                    acc += values[cs[c | bit] * n + i] - values[cs[c] * n + i];
                }
                out[(i, a)] = acc * self.grad_scale;
            }
        }
    }

    /// Adds the adjoint of gradient and averaging: for a cell integrand with
    /// partial derivatives `d_a` (w.r.t. the cell gradient) and `d_s` (w.r.t.
    /// the corner average), accumulates `weight * d(integrand)/d(node value)`.
    pub fn scatter(&self, n: usize, cell: usize, d_a: &Matrix, d_s: &[f64], weight: f64, out: &mut [f64]) {
        let cs = self.corners(cell);
        let avg = weight / self.corners_per_cell as f64;
        let gs = weight * self.grad_scale;
        for (c, &node) in cs.iter().enumerate() {
            for i in 0..n {
                let mut acc = d_s[i] * avg;
                for a in 0..self.dim {
                    let sign = if (c >> a) & 1 == 1 { 1.0 } else { -1.0 };
                    acc += sign * d_a[(i, a)] * gs;
                }
                out[node * n + i] += acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = Grid::new(2, 2.0, 4).unwrap();
        assert_eq!(g.node_count(), 25);
        assert_eq!(g.cell_count(), 16);
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.interior_nodes().len(), 9);
        let mut idx = [0; 2];
        g.node_multi_index(g.node_index(&[3, 1]), &mut idx);
        assert_eq!(idx, [3, 1]);
        assert!(Grid::per_unit(1, 1.5, 3).is_err());
        assert_eq!(Grid::per_unit(1, 1.5, 4).unwrap().nodes_per_side(), 6);
    }

    #[test]
    fn text_dump_round_trips_exactly() {
        let g = Grid::new(2, 0.7, 3).unwrap();
        let f = GridField::from_fn(g, 2, |x| vec![x[0].sin() / 3.0, 1e-300 * x[1]]);
        let back = GridField::from_text(&f.to_text()).unwrap();
        assert_eq!(back, f);
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn malformed_dump_is_rejected() {
        assert!(GridField::from_text("").is_err());
        assert!(GridField::from_text("gridfield dim=1 side_length=1 nodes_per_side=2 components=1\n0\n0").is_err());
        assert!(GridField::from_text("gridfield dim=1 bogus=3\n").is_err());
    }

    #[test]
    fn scatter_is_the_adjoint() {
        // <scatter(dA, ds), v> must equal dA : grad(v) + ds . avg(v)
        let g = Grid::new(3, 1.0, 2).unwrap();
        let st = Stencil::new(&g);
        let v = GridField::from_fn(g.clone(), 2, |x| vec![x[0] * x[1] + x[2], (x[0] - x[2]).cos()]);
        let d_a: Matrix = "0.3,-0.2,1.1;0.5,0.25,-0.75".parse().unwrap();
        let d_s = [0.4, -1.3];
        let mut out = vec![0.0; v.values().len()];
        st.scatter(2, 5, &d_a, &d_s, 1.0, &mut out);
        let lhs: f64 = out.iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let mut grad = Matrix::zeros(2, 3);
        st.cell_gradient(v.values(), 2, 5, &mut grad);
        let mut avg = [0.0; 2];
        st.corner_average(v.values(), 2, 5, &mut avg);
        let rhs: f64 =
            grad.data().iter().zip(d_a.data()).map(|(a, b)| a * b).sum::<f64>() + avg[0] * d_s[0] + avg[1] * d_s[1];
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
