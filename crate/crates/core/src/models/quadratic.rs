use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Growth, Lagrangian};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::report::{Clause, VerificationReport};

/// `Q(A) = a^{ab} b_{ij} A^i_a A^j_b` with constant `a` (m x m) and `b` (N x N).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticForm {
    pub a: Matrix,
    pub b: Matrix,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticFormFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

fn nested_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&refs).map_err(|e| Error::Parse(format!("matrix '{what}': {e}")))
}

impl QuadraticForm {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        if a.rows() != a.cols() || b.rows() != b.cols() {
            return Err(Error::Dimension("coefficient matrices must be square".into()));
        }
        Ok(QuadraticForm { a, b })
    }

    /// Reads `a = [[..], ..]` and `b = [[..], ..]` from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: QuadraticFormFile = toml::from_str(text).map_err(|e| Error::Parse(format!("quadratic form: {e}")))?;
        Self::new(nested_to_matrix(&file.a, "a")?, nested_to_matrix(&file.b, "b")?)
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.b.rows()
    }

    pub fn value(&self, x: &Matrix) -> f64 {
        let (n, m) = (self.n(), self.m());
        let mut total = 0.0;
        for al in 0..m {
            for be in 0..m {
                let mut inner = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        inner += self.b[(i, j)] * x[(i, al)] * x[(j, be)];
                    }
                }
                total += self.a[(al, be)] * inner;
            }
        }
        total
    }

    /// `b = c I` for some scalar `c`.
    pub fn is_isotropic(&self) -> bool {
        let c = self.b[(0, 0)];
        (0..self.n()).all(|i| (0..self.n()).all(|j| self.b[(i, j)] == if i == j { c } else { 0.0 }))
    }

    /// Extreme eigenvalues of the symmetrized form on N x m matrices.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        let (n, m) = (self.n(), self.m());
        let d = n * m;
        let mut k = nalgebra::DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            for al in 0..m {
                for j in 0..n {
                    for be in 0..m {
                        k[(i * m + al, j * m + be)] =
                            0.5 * (self.a[(al, be)] * self.b[(i, j)] + self.a[(be, al)] * self.b[(j, i)]);
                    }
                }
            }
        }
        let eig = k.symmetric_eigenvalues();
        (eig.min(), eig.max())
    }
}

impl Lagrangian for QuadraticForm {
    fn name(&self) -> String {
        "quadratic-form".into()
    }
    fn source_dim(&self) -> usize {
        self.m()
    }
    fn target_dim(&self) -> usize {
        self.n()
    }
    fn eval(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        self.value(a)
    }
    fn growth(&self) -> Growth {
        let (lo, hi) = self.spectrum_bounds();
        Growth { c1: lo.max(0.0), c2: hi.max(0.0), p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, _x: &[f64], _s: &[f64], x: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        let (n, m) = (self.n(), self.m());
        for i in 0..n {
            for al in 0..m {
                let mut acc = 0.0;
                for j in 0..n {
                    for be in 0..m {
                        acc += (self.a[(al, be)] * self.b[(i, j)] + self.a[(be, al)] * self.b[(j, i)]) * x[(j, be)];
                    }
                }
                da[(i, al)] = acc;
            }
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
}

/// Which argument carries the periodic weight `1 + amp cos(2 pi k t_1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Oscillation {
    None,
    /// weight on `b`, as a function of the target value `s`
    Target,
    /// weight on `a`, as a function of the source point `x`
    Source,
}

/// `w(x, s) Q(A)` with the weight oscillating at frequency `freq`.
#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub form: QuadraticForm,
    pub oscillation: Oscillation,
    pub amplitude: f64,
    pub freq: f64,
}

impl FamilyMember {
    pub fn weight(&self, x: &[f64], s: &[f64]) -> f64 {
        let arg = match self.oscillation {
            Oscillation::None => return 1.0,
            Oscillation::Target => s[0],
            Oscillation::Source => x[0],
        };
        1.0 + self.amplitude * (2.0 * PI * self.freq * arg).cos()
    }
}

impl Lagrangian for FamilyMember {
    fn name(&self) -> String {
        format!("family-member[k={}]", self.freq)
    }
    fn source_dim(&self) -> usize {
        self.form.m()
    }
    fn target_dim(&self) -> usize {
        self.form.n()
    }
    fn eval(&self, x: &[f64], s: &[f64], a: &Matrix) -> f64 {
        self.weight(x, s) * self.form.value(a)
    }
    fn growth(&self) -> Growth {
        let g = self.form.growth();
        Growth { c1: g.c1 * (1.0 - self.amplitude), c2: g.c2 * (1.0 + self.amplitude), p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        self.oscillation == Oscillation::Source
    }
    fn depends_on_s(&self) -> bool {
        self.oscillation == Oscillation::Target
    }
}

/// Finite sequence of coefficient pairs `(a_n, b_n)`. Member `n` oscillates
/// with frequency `n + 1`.
#[derive(Clone, Debug)]
pub struct CoefficientFamily {
    pub a_n: Vec<Matrix>,
    pub b_n: Vec<Matrix>,
    pub bound_m: f64,
    pub coercivity_c1: f64,
    pub modulus_omega: Option<fn(f64) -> f64>,
    pub oscillation: Oscillation,
    pub amplitude: f64,
}

impl CoefficientFamily {
    /// `a = I`, `b_n = c_n I`, oscillating in the target.
    pub fn isotropic(members: usize, n: usize) -> Self {
        let b_n = (0..members).map(|k| &Matrix::identity(n) * (1.0 + 0.25 * k as f64)).collect();
        CoefficientFamily {
            a_n: vec![Matrix::identity(2); members],
            b_n,
            bound_m: 1.5 * (1.0 + 0.25 * members as f64),
            coercivity_c1: 0.5,
            modulus_omega: None,
            oscillation: Oscillation::Target,
            amplitude: 0.5,
        }
    }

    /// `a = I`, general symmetric positive `b_n`, oscillating in the target.
    pub fn target_metric(members: usize) -> Self {
        let b_n = (0..members)
            .map(|k| {
                let c = 0.1 * k as f64;
                Matrix::from_rows(&[&[2.0, 0.3 + c, 0.0], &[0.3 + c, 1.5, -0.2], &[0.0, -0.2, 1.0 + c]]).unwrap()
            })
            .collect();
        CoefficientFamily {
            a_n: vec![Matrix::identity(2); members],
            b_n,
            bound_m: 4.0 + 0.2 * members as f64,
            coercivity_c1: 0.05,
            modulus_omega: None,
            oscillation: Oscillation::Target,
            amplitude: 0.5,
        }
    }

    /// `b = I`, general symmetric positive `a_n`, oscillating in the source.
    pub fn source_metric(members: usize) -> Self {
        let a_n = (0..members)
            .map(|k| {
                let c = 0.1 * k as f64;
                Matrix::from_rows(&[&[1.5 + c, 0.4], &[0.4, 1.0]]).unwrap()
            })
            .collect();
        CoefficientFamily {
            a_n,
            b_n: vec![Matrix::identity(3); members],
            bound_m: 3.0 + 0.2 * members as f64,
            coercivity_c1: 0.2,
            modulus_omega: None,
            oscillation: Oscillation::Source,
            amplitude: 0.5,
        }
    }

    pub fn len(&self) -> usize {
        self.a_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_n.is_empty()
    }

    pub fn member(&self, k: usize) -> FamilyMember {
        FamilyMember {
            form: QuadraticForm::new(self.a_n[k].clone(), self.b_n[k].clone()).unwrap(),
            oscillation: self.oscillation,
            amplitude: self.amplitude,
            freq: (k + 1) as f64,
        }
    }

    /// Boundedness by `bound_m` (weight included), sampled coercivity, and
    /// the modulus of continuity in `s` when one is supplied.
    pub fn check_invariants(&self, samples: usize, seed: u64) -> VerificationReport {
        let mut report = VerificationReport::new("coefficient-family");
        let w = 1.0 + self.amplitude.abs();
        let sup_a = self.a_n.iter().map(|a| a.max_abs()).fold(0.0, f64::max);
        let sup_b = self.b_n.iter().map(|b| b.max_abs()).fold(0.0, f64::max);
        let (wa, wb) = match self.oscillation {
            Oscillation::Source => (w, 1.0),
            Oscillation::Target => (1.0, w),
            Oscillation::None => (1.0, 1.0),
        };
        let sup = (sup_a * wa).max(sup_b * wb);
        report.push(Clause::new("coefficients bounded by M", sup <= self.bound_m, self.bound_m - sup).with("sup", sup));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        let mut worst_modulus = f64::INFINITY;
        for k in 0..self.len() {
            let member = self.member(k);
            let (n, m) = (member.target_dim(), member.source_dim());
            for _ in 0..samples {
                let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let mut a = Matrix::zeros(n, m);
                a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                let na = a.norm_sq();
                if na > 1e-12 {
                    worst = worst.min(member.eval(&x, &s, &a) / na - self.coercivity_c1);
                }
                if let Some(omega) = self.modulus_omega {
                    let s2: Vec<f64> = s.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
                    let d: f64 = s.iter().zip(&s2).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                    let lhs = (member.eval(&x, &s, &a) - member.eval(&x, &s2, &a)).abs();
                    worst_modulus = worst_modulus.min(omega(d) * (1.0 + na) - lhs);
                }
            }
        }
        report.push(Clause::new("coercivity on samples", worst >= 0.0, worst));
        if self.modulus_omega.is_some() {
            report.push(Clause::new("modulus of continuity in s", worst_modulus >= 0.0, worst_modulus));
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closing_coefficients_reproduce_half_norm_plus_wedge() {
        let r = 0.5f64.sqrt();
        let a = Matrix::from_rows(&[&[r, 0.5], &[-0.5, r]]).unwrap();
        let b = Matrix::from_rows(&[&[r, 0.5, 0.0], &[-0.5, r, 0.0], &[0.0, 0.0, r]]).unwrap();
        let q = QuadraticForm::new(a, b).unwrap();
        let x = Matrix::from_columns(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]).unwrap();
        assert!((q.value(&x) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn toml_loading() {
        let q = QuadraticForm::from_toml_str("a = [[1.0, 0.0], [0.0, 1.0]]\nb = [[2.0]]\n").unwrap();
        assert_eq!((q.n(), q.m()), (1, 2));
        assert!(q.is_isotropic());
        assert_eq!(q.growth(), Growth { c1: 2.0, c2: 2.0, p: 2.0 });
        assert!(QuadraticForm::from_toml_str("a = [[1.0]]\nb = [[1.0]]\nc = 3\n").is_err());
        assert!(QuadraticForm::from_toml_str("a = [[1.0, 2.0]]\nb = [[1.0]]\n").is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let q = QuadraticForm::new(
            Matrix::from_rows(&[&[1.0, 0.3], &[-0.2, 2.0]]).unwrap(),
            Matrix::from_rows(&[&[1.0, 0.5], &[0.1, 1.5]]).unwrap(),
        )
        .unwrap();
        let err = crate::models::check_lagrangian_derivatives(&q, 50, 1).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn shipped_families_satisfy_their_bounds() {
        for fam in [
            CoefficientFamily::isotropic(3, 3),
            CoefficientFamily::target_metric(3),
            CoefficientFamily::source_metric(3),
        ] {
            let r = fam.check_invariants(200, 4);
            assert!(r.overall(), "{}", r.to_text());
        }
        let mut fam = CoefficientFamily::isotropic(2, 2);
        fam.bound_m = 0.1;
        assert!(!fam.check_invariants(10, 1).overall());
    }
}
