use super::{Growth, Lagrangian};
use crate::numerics::Matrix;

/// `|A|^2 + A[1][0] * A[1][1]`: Euclidean energy plus a coupling between the
/// two derivatives of the second component. Convex, x- and s-independent,
/// with `|A|^2 / 2 <= f <= 3 |A|^2 / 2`.
#[derive(Clone, Debug)]
pub struct FinslerAsym {
    n: usize,
}

impl FinslerAsym {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "the coupling needs a second component");
        FinslerAsym { n }
    }

    pub fn value(a: &Matrix) -> f64 {
        a.norm_sq() + a[(1, 0)] * a[(1, 1)]
    }
}

/// The two-source, three-target instance.
pub fn make_counterexample_finsler() -> FinslerAsym {
    FinslerAsym::new(3)
}

impl Lagrangian for FinslerAsym {
    fn name(&self) -> String {
        "finsler-asym".into()
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        self.n
    }
    fn eval(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        Self::value(a)
    }
    fn growth(&self) -> Growth {
        Growth { c1: 0.5, c2: 2.0, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, _x: &[f64], _s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        for (d, v) in da.data_mut().iter_mut().zip(a.data()) {
            *d = 2.0 * v;
        }
        da[(1, 0)] += a[(1, 1)];
        da[(1, 1)] += a[(1, 0)];
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cols(c1: [f64; 3], c2: [f64; 3]) -> Matrix {
        Matrix::from_columns(&[&c1, &c2]).unwrap()
    }

    #[test]
    fn probe_values() {
        let f = make_counterexample_finsler();
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        assert_eq!(f.eval(&[0.0; 2], &[0.0; 3], &cols(e1, e1)), 2.0);
        assert_eq!(f.eval(&[0.0; 2], &[0.0; 3], &cols(e2, e2)), 3.0);
        assert_eq!(f.eval(&[0.0; 2], &[0.0; 3], &Matrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn invariant_under_column_swap() {
        let f = make_counterexample_finsler();
        let a: Matrix = "0.3,1.1;-0.7,2.0;0.4,0.0".parse().unwrap();
        assert_eq!(f.eval(&[0.0; 2], &[0.0; 3], &a), f.eval(&[0.0; 2], &[0.0; 3], &a.swap_columns(0, 1)));
    }

    #[test]
    fn growth_witness_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = Matrix::zeros(3, 2);
        for _ in 0..1000 {
            a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-3.0..3.0));
            let v = FinslerAsym::value(&a);
            assert!(v >= 0.5 * a.norm_sq() - 1e-12);
            assert!(v <= 2.0 * a.norm_sq() + 1e-12);
        }
    }

    #[test]
    fn quadratic_form_is_positive_semidefinite() {
        // f(A) = v^T M v with v the row-major entries; check the spectrum of M
        let mut m = nalgebra::DMatrix::<f64>::identity(6, 6);
        m[(2, 3)] = 0.5;
        m[(3, 2)] = 0.5;
        let eig = m.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l >= 0.5 - 1e-14));
        let a: Matrix = "0.3,1.1;-0.7,2.0;0.4,0.0".parse().unwrap();
        let v = nalgebra::DVector::from_row_slice(a.data());
        assert!(((v.transpose() * &m * &v)[(0, 0)] - FinslerAsym::value(&a)).abs() < 1e-12);
    }
}
