use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CartanIntegrand, Growth, Lagrangian};
use crate::numerics::{norm3, wedge, Matrix};
use crate::report::{Clause, VerificationReport};

const RISE_START: f64 = 1.0 / 6.0;

/// Cutoff `eta: [0,1] -> [0,1]`, constant 0 below 1/6 and rising to 1 at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Cutoff {
    /// `6r^5 - 15r^4 + 10r^3` in the rescaled variable.
    Quintic,
    /// `3r^2 - 2r^3` in the rescaled variable.
    Cubic,
    Linear,
    /// `eta = 1` everywhere. Violates `eta(0) = 0`; used as a control.
    ConstantOne,
}

impl Cutoff {
    fn rescaled(r: f64) -> f64 {
        ((r - RISE_START) / (1.0 - RISE_START)).clamp(0.0, 1.0)
    }

    pub fn eval(self, r: f64) -> f64 {
        let q = Self::rescaled(r);
        match self {
            Cutoff::Quintic => q * q * q * (q * (6.0 * q - 15.0) + 10.0),
            Cutoff::Cubic => q * q * (3.0 - 2.0 * q),
            Cutoff::Linear => q,
            Cutoff::ConstantOne => 1.0,
        }
    }

    pub fn derivative(self, r: f64) -> f64 {
        if !(RISE_START < r && r < 1.0) || self == Cutoff::ConstantOne {
            return 0.0;
        }
        let q = Self::rescaled(r);
        let dq = 1.0 / (1.0 - RISE_START);
        dq * match self {
            Cutoff::Quintic => 30.0 * q * q * (q - 1.0) * (q - 1.0),
            Cutoff::Cubic => 6.0 * q * (1.0 - q),
            Cutoff::Linear => 1.0,
            Cutoff::ConstantOne => 0.0,
        }
    }

    /// `eta(0) = 0`, `eta(1) = 1` and `0 < eta < 1` on a sample of `(1/6, 1)`.
    pub fn is_admissible(self) -> bool {
        let interior = (1..200).all(|k| {
            let r = RISE_START + (1.0 - RISE_START) * k as f64 / 200.0;
            let v = self.eval(r);
            0.0 < v && v < 1.0
        });
        self.eval(0.0) == 0.0 && self.eval(1.0) == 1.0 && interior
    }

    pub fn name(self) -> &'static str {
        match self {
            Cutoff::Quintic => "quintic",
            Cutoff::Cubic => "cubic",
            Cutoff::Linear => "linear",
            Cutoff::ConstantOne => "one",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quintic" => Some(Cutoff::Quintic),
            "cubic" => Some(Cutoff::Cubic),
            "linear" => Some(Cutoff::Linear),
            "one" => Some(Cutoff::ConstantOne),
            _ => None,
        }
    }
}

/// `2 |A_1 x A_2| / |A|^2` for a 3x2 matrix, and 1 at `A = 0`.
pub fn tau(a: &Matrix) -> f64 {
    let na = a.norm_sq();
    if na == 0.0 {
        return 1.0;
    }
    (2.0 * norm3(wedge(a.column3(0), a.column3(1))) / na).min(1.0)
}

/// `g(A) = |A|^2 + |A|^2 (1/2 + eta(tau(A)) / 2) / 2`, a dominance function
/// for the Cartan integrand `3|z|`.
#[derive(Clone, Copy, Debug)]
pub struct Dominance {
    pub cutoff: Cutoff,
}

impl Dominance {
    pub fn new(cutoff: Cutoff) -> Self {
        Dominance { cutoff }
    }

    pub fn value(&self, a: &Matrix) -> f64 {
        let na = a.norm_sq();
        na + 0.5 * na * (0.5 + 0.5 * self.cutoff.eval(tau(a)))
    }
}

/// Dominance function with the default quintic cutoff.
pub fn make_dominance_g() -> Dominance {
    Dominance::new(Cutoff::Quintic)
}

impl Lagrangian for Dominance {
    fn name(&self) -> String {
        format!("dominance-3norm[{}]", self.cutoff.name())
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        3
    }
    fn eval(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        self.value(a)
    }
    fn growth(&self) -> Growth {
        Growth { c1: 1.25, c2: 1.5, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, _x: &[f64], _s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        let na = a.norm_sq();
        if na == 0.0 {
            da.fill(0.0);
            return true;
        }
        let (a1, a2) = (a.column3(0), a.column3(1));
        let w = wedge(a1, a2);
        let nw = norm3(w);
        let t = (2.0 * nw / na).min(1.0);
        let factor = 1.25 + 0.25 * self.cutoff.eval(t);
        for (d, v) in da.data_mut().iter_mut().zip(a.data()) {
            *d = 2.0 * factor * v;
        }
        let deta = self.cutoff.derivative(t);
        if deta != 0.0 && nw > 0.0 {
            let wh = [w[0] / nw, w[1] / nw, w[2] / nw];
            let g1 = wedge(a2, wh);
            let g2 = wedge(wh, a1);
            let c = 0.25 * na * deta;
            for i in 0..3 {
                let dt1 = 2.0 * g1[i] / na - 4.0 * nw * a1[i] / (na * na);
                let dt2 = 2.0 * g2[i] / na - 4.0 * nw * a2[i] / (na * na);
                da[(i, 0)] += c * dt1;
                da[(i, 1)] += c * dt2;
            }
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn smooth_away_from(&self) -> &str {
        "A = 0, parallel columns, and the cutoff's breakpoints in tau"
    }
    fn is_regular(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> bool {
        let na = a.norm_sq();
        if na < 1e-6 {
            return false;
        }
        let t = tau(a);
        t > 1e-4 && (t - RISE_START).abs() > 1e-4 && t < 1.0 - 1e-6
    }
}

fn random_s(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = norm3(v);
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Sampled check that `g` dominates the associated Lagrangian
/// `f(s, A) = phi(s, A_1 x A_2)` with equality exactly on conformal matrices.
pub fn check_dominance(g: &dyn Lagrangian, phi: &dyn CartanIntegrand, samples: usize, seed: u64) -> VerificationReport {
    assert!(samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerificationReport::new(format!("dominance[{} vs {}]", g.name(), phi.name()));
    let x = [0.0, 0.0];

    let mut worst_general = f64::INFINITY;
    let mut worst_strict = f64::INFINITY;
    let mut a = Matrix::zeros(3, 2);
    for _ in 0..samples {
        let s = random_s(&mut rng);
        a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
        let f = phi.phi(s, wedge(a.column3(0), a.column3(1)));
        let gv = g.eval(&x, &s, &a);
        worst_general = worst_general.min(gv - f);
        worst_strict = worst_strict.min(gv - f);
    }

    let mut worst_conformal: f64 = 0.0;
    for _ in 0..samples {
        let s = random_s(&mut rng);
        let u = random_unit(&mut rng);
        let mut v = random_unit(&mut rng);
        let d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        v = [v[0] - d * u[0], v[1] - d * u[1], v[2] - d * u[2]];
        let nv = norm3(v);
        if nv < 1e-3 {
            continue;
        }
        let r = rng.gen_range(0.1..2.0);
        let c1 = [r * u[0], r * u[1], r * u[2]];
        let c2 = [r * v[0] / nv, r * v[1] / nv, r * v[2] / nv];
        let a = Matrix::from_columns(&[&c1, &c2]).unwrap();
        let f = phi.phi(s, wedge(c1, c2));
        let gv = g.eval(&x, &s, &a);
        worst_general = worst_general.min(gv - f);
        worst_conformal = worst_conformal.max((gv - f).abs());
    }

    report.push(Clause::positive("f <= g on all samples", worst_general + 1e-12).with("min(g-f)", worst_general));
    report.push(
        Clause::new("f = g on conformal samples", worst_conformal <= 1e-9, 1e-9 - worst_conformal)
            .with("max|g-f|", worst_conformal),
    );
    report
        .push(Clause::positive("g > f on generic non-conformal samples", worst_strict).with("min(g-f)", worst_strict));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{NonEvenCartan, NonEvenDominance, NormCartan};

    fn cols(c1: [f64; 3], c2: [f64; 3]) -> Matrix {
        Matrix::from_columns(&[&c1, &c2]).unwrap()
    }
    const E1: [f64; 3] = [1.0, 0.0, 0.0];
    const E2: [f64; 3] = [0.0, 1.0, 0.0];
    const E3: [f64; 3] = [0.0, 0.0, 1.0];
    const E23: [f64; 3] = [0.0, 1.0, 1.0];

    #[test]
    fn tau_examples() {
        assert_eq!(tau(&cols(E1, E2)), 1.0);
        assert_eq!(tau(&cols(E1, E1)), 0.0);
        assert!((tau(&cols(E1, E23)) - 2.0 * 2f64.sqrt() / 3.0).abs() < 1e-15);
        assert_eq!(tau(&Matrix::zeros(3, 2)), 1.0);
    }

    #[test]
    fn tau_is_symmetric_and_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (c, s) = (0.6f64, 0.8f64);
        let rot: Matrix = format!("{c},{},0;{s},{c},0;0,0,1", -s).parse().unwrap();
        for _ in 0..200 {
            let mut a = Matrix::zeros(3, 2);
            a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            assert_eq!(tau(&a), tau(&a.swap_columns(0, 1)));
            assert!((tau(&rot.matmul(&a)) - tau(&a)).abs() < 1e-12);
        }
    }

    #[test]
    fn dominance_values() {
        for cutoff in [Cutoff::Quintic, Cutoff::Cubic, Cutoff::Linear] {
            let g = Dominance::new(cutoff);
            let t = 2.0 * 2f64.sqrt() / 3.0;
            let want = 15.0 / 4.0 + 0.75 * cutoff.eval(t);
            assert!((g.value(&cols(E1, E23)) - want).abs() < 1e-13);
            assert_eq!(g.value(&cols(E1, E2)), 3.0);
            assert_eq!(g.value(&Matrix::zeros(3, 2)), 0.0);
        }
    }

    #[test]
    fn cutoffs_admissibility() {
        assert!(Cutoff::Quintic.is_admissible());
        assert!(Cutoff::Cubic.is_admissible());
        assert!(Cutoff::Linear.is_admissible());
        assert!(!Cutoff::ConstantOne.is_admissible());
        assert_eq!(Cutoff::Quintic.eval(0.1), 0.0);
    }

    #[test]
    fn two_homogeneous() {
        let g = make_dominance_g();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut a = Matrix::zeros(3, 2);
            a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            let base = g.value(&a);
            for t in [0.5, 2.0, 7.0] {
                let scaled = g.value(&(&a * t));
                assert!((scaled - t * t * base).abs() <= 1e-12 * t * t * base);
            }
        }
    }

    #[test]
    fn dominates_three_norm() {
        let r = check_dominance(&make_dominance_g(), &NormCartan::new(3.0), 2000, 11);
        assert!(r.overall(), "{}", r.to_text());
        for cutoff in [Cutoff::Cubic, Cutoff::Linear] {
            assert!(check_dominance(&Dominance::new(cutoff), &NormCartan::new(3.0), 500, 12).overall());
        }
    }

    #[test]
    fn half_dirichlet_dominates_area() {
        let g = crate::models::Dirichlet::scaled(3, 2, 0.5);
        let r = check_dominance(&g, &NormCartan::new(1.0), 1000, 2);
        assert!(r.overall(), "{}", r.to_text());
        assert_eq!(g.eval(&[0.0; 2], &[0.0; 3], &cols(E1, E2)), 1.0);
        assert_eq!(NormCartan::new(1.0).phi([0.0; 3], wedge(E1, E2)), 1.0);
        assert_eq!(NormCartan::new(1.0).phi([0.0; 3], wedge(E1, E1)), 0.0);
    }

    #[test]
    fn non_even_pair() {
        let r = check_dominance(&NonEvenDominance, &NonEvenCartan, 1000, 3);
        assert!(r.overall(), "{}", r.to_text());
        // a coefficient of 1 on z_3 breaks dominance at (e1|e2)
        let bad = NonEvenDominance.eval(&[0.0; 2], &[0.0; 3], &cols(E1, E2));
        let phi_full = norm3(E3) + 1.0;
        assert!(bad < phi_full);
    }

    #[test]
    fn constant_cutoff_gives_three_halves() {
        let g = Dominance::new(Cutoff::ConstantOne);
        assert_eq!(g.value(&cols(E1, E1)), 3.0);
    }
}
