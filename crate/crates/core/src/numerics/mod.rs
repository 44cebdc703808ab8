//! Small dense matrices, uniform cube grids, nodal fields and the cellwise
//! difference/quadrature operators shared by the solvers.

mod grid;
mod matrix;

pub use grid::{Grid, GridField, Stencil};
pub use matrix::Matrix;

use crate::error::{Error, Result};

/// One `n_components x dim` gradient per grid cell, from corner differences
/// averaged per axis.
pub fn gradient_at_cells(field: &GridField, n_components: usize) -> Result<Vec<Matrix>> {
    if field.components() != n_components {
        return Err(Error::Dimension(format!(
            "field has {} components, expected {}",
            field.components(),
            n_components
        )));
    }
    let grid = field.grid();
    if grid.nodes_per_side() == 0 {
        return Err(Error::Dimension("grid has no cells".into()));
    }
    let stencil = Stencil::new(grid);
    let mut out = Vec::with_capacity(stencil.cell_count());
    let mut a = Matrix::zeros(n_components, grid.dim());
    for cell in 0..stencil.cell_count() {
        stencil.cell_gradient(field.values(), n_components, cell, &mut a);
        out.push(a.clone());
    }
    Ok(out)
}

/// Midpoint rule: `h^m * sum(values)`.
pub fn integrate_cellwise(cell_values: &[f64], grid: &Grid) -> Result<f64> {
    if cell_values.len() != grid.cell_count() {
        return Err(Error::Dimension(format!(
            "{} cell values for a grid with {} cells",
            cell_values.len(),
            grid.cell_count()
        )));
    }
    Ok(grid.cell_volume() * cell_values.iter().sum::<f64>())
}

/// Cross product `a x b`.
pub fn wedge(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Checked variant for slices coming from user input.
pub fn wedge_slices(a: &[f64], b: &[f64]) -> Result<[f64; 3]> {
    if a.len() != 3 || b.len() != 3 {
        return Err(Error::Dimension(format!("wedge needs 3-vectors, got {} and {}", a.len(), b.len())));
    }
    Ok(wedge([a[0], a[1], a[2]], [b[0], b[1], b[2]]))
}

pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_field_has_zero_gradients() {
        let grid = Grid::new(2, 1.0, 4).unwrap();
        let f = GridField::zeros(grid, 3);
        for a in gradient_at_cells(&f, 3).unwrap() {
            assert_eq!(a.norm_sq(), 0.0);
        }
    }

    #[test]
    fn affine_field_reproduces_its_matrix() {
        let y: Matrix = "0.3,-1.2;2.5,0.7;-0.4,0.1".parse().unwrap();
        let grid = Grid::new(2, 2.0, 6).unwrap();
        let f = GridField::from_fn(grid, 3, |x| y.mul_vec(x));
        for a in gradient_at_cells(&f, 3).unwrap() {
            for (p, q) in a.data().iter().zip(y.data()) {
                assert_abs_diff_eq!(p, q, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn hat_difference_quotients() {
        let grid = Grid::new(1, 1.0, 2).unwrap();
        let f = GridField::from_values(grid, 1, vec![0.0, 0.5, 0.0]).unwrap();
        let g = gradient_at_cells(&f, 1).unwrap();
        assert_eq!(g[0][(0, 0)], 1.0);
        assert_eq!(g[1][(0, 0)], -1.0);
    }

    #[test]
    fn component_mismatch_is_an_error() {
        let grid = Grid::new(1, 1.0, 2).unwrap();
        let f = GridField::zeros(grid, 2);
        assert!(gradient_at_cells(&f, 3).is_err());
    }

    #[test]
    fn midpoint_quadrature() {
        let g = Grid::new(2, 2.0, 5).unwrap();
        let ones = vec![1.0; g.cell_count()];
        assert_abs_diff_eq!(integrate_cellwise(&ones, &g).unwrap(), 4.0, epsilon = 1e-14);

        let g = Grid::new(1, 1.0, 3).unwrap();
        assert_abs_diff_eq!(integrate_cellwise(&[2.5; 3], &g).unwrap(), 2.5, epsilon = 1e-15);

        let g = Grid::new(1, 1.0, 4).unwrap();
        assert_eq!(integrate_cellwise(&[1.0, 2.0, 3.0, 4.0], &g).unwrap(), 2.5);
        assert!(integrate_cellwise(&[1.0], &g).is_err());
    }

    #[test]
    fn wedge_examples() {
        assert_eq!(wedge([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
        let a = [0.3, -2.0, 1.5];
        assert_eq!(wedge(a, a), [0.0, 0.0, 0.0]);
        let w = wedge([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]);
        assert_eq!(w, [0.0, -1.0, 1.0]);
        assert_abs_diff_eq!(norm3(w), 2f64.sqrt(), epsilon = 1e-15);
        assert!(wedge_slices(&[1.0, 0.0], &[0.0, 1.0, 0.0]).is_err());
    }
}
