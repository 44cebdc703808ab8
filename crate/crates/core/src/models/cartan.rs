use super::{Growth, Lagrangian};
use crate::numerics::{norm3, wedge, Matrix};

/// Parametric integrand `phi(s, z)`, positively 1-homogeneous in `z` with
/// `m1 |z| <= phi <= m2 |z|`.
pub trait CartanIntegrand: Send + Sync {
    fn name(&self) -> String;
    fn phi(&self, s: [f64; 3], z: [f64; 3]) -> f64;
    /// `d phi / dz`; false when unavailable or at `z = 0`.
    fn phi_gradient(&self, s: [f64; 3], z: [f64; 3], out: &mut [f64; 3]) -> bool;
    fn bounds(&self) -> (f64, f64);
    fn is_even(&self) -> bool;
}

/// `scale * |z|`.
#[derive(Clone, Copy, Debug)]
pub struct NormCartan {
    pub scale: f64,
}

impl NormCartan {
    pub fn new(scale: f64) -> Self {
        assert!(scale > 0.0);
        NormCartan { scale }
    }
}

impl CartanIntegrand for NormCartan {
    fn name(&self) -> String {
        format!("{}|z|", self.scale)
    }
    fn phi(&self, _s: [f64; 3], z: [f64; 3]) -> f64 {
        self.scale * norm3(z)
    }
    fn phi_gradient(&self, _s: [f64; 3], z: [f64; 3], out: &mut [f64; 3]) -> bool {
        let n = norm3(z);
        if n == 0.0 {
            return false;
        }
        for i in 0..3 {
            out[i] = self.scale * z[i] / n;
        }
        true
    }
    fn bounds(&self) -> (f64, f64) {
        (self.scale, self.scale)
    }
    fn is_even(&self) -> bool {
        true
    }
}

/// `|z| + z_3 / 2`.
#[derive(Clone, Copy, Debug)]
pub struct NonEvenCartan;

impl CartanIntegrand for NonEvenCartan {
    fn name(&self) -> String {
        "|z|+z3/2".into()
    }
    fn phi(&self, _s: [f64; 3], z: [f64; 3]) -> f64 {
        norm3(z) + 0.5 * z[2]
    }
    fn phi_gradient(&self, _s: [f64; 3], z: [f64; 3], out: &mut [f64; 3]) -> bool {
        let n = norm3(z);
        if n == 0.0 {
            return false;
        }
        *out = [z[0] / n, z[1] / n, z[2] / n + 0.5];
        true
    }
    fn bounds(&self) -> (f64, f64) {
        (0.5, 1.5)
    }
    fn is_even(&self) -> bool {
        false
    }
}

/// `f(s, A) = phi(s, A_1 x A_2)`.
#[derive(Clone, Debug)]
pub struct AssociatedLagrangian<P> {
    pub integrand: P,
}

impl<P: CartanIntegrand> AssociatedLagrangian<P> {
    pub fn new(integrand: P) -> Self {
        AssociatedLagrangian { integrand }
    }
}

fn s3(s: &[f64]) -> [f64; 3] {
    [s[0], s[1], s[2]]
}

impl<P: CartanIntegrand> Lagrangian for AssociatedLagrangian<P> {
    fn name(&self) -> String {
        format!("cartan[{}]", self.integrand.name())
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        3
    }
    fn eval(&self, _x: &[f64], s: &[f64], a: &Matrix) -> f64 {
        self.integrand.phi(s3(s), wedge(a.column3(0), a.column3(1)))
    }
    fn growth(&self) -> Growth {
        // |A_1 x A_2| <= |A|^2 / 2, and f vanishes on parallel columns
        Growth { c1: 0.0, c2: 0.5 * self.integrand.bounds().1, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, _x: &[f64], s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        let (a1, a2) = (a.column3(0), a.column3(1));
        let mut w = [0.0; 3];
        if !self.integrand.phi_gradient(s3(s), wedge(a1, a2), &mut w) {
            return false;
        }
        ds.fill(0.0);
        let g1 = wedge(a2, w);
        let g2 = wedge(w, a1);
        for i in 0..3 {
            da[(i, 0)] = g1[i];
            da[(i, 1)] = g2[i];
        }
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
    fn smooth_away_from(&self) -> &str {
        "matrices with parallel columns (A_1 x A_2 = 0)"
    }
    fn is_regular(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> bool {
        norm3(wedge(a.column3(0), a.column3(1))) > 1e-3 * a.norm_sq().max(1e-12)
    }
}

/// `|A|^2 / 2 + (A_1 x A_2)_3 / 2`, a perfect dominance function for
/// [`NonEvenCartan`]. Not invariant under swapping the columns.
#[derive(Clone, Copy, Debug)]
pub struct NonEvenDominance;

impl NonEvenDominance {
    pub fn value(a: &Matrix) -> f64 {
        0.5 * a.norm_sq() + 0.5 * (a[(0, 0)] * a[(1, 1)] - a[(1, 0)] * a[(0, 1)])
    }
}

impl Lagrangian for NonEvenDominance {
    fn name(&self) -> String {
        "dominance-noneven".into()
    }
    fn source_dim(&self) -> usize {
        2
    }
    fn target_dim(&self) -> usize {
        3
    }
    fn eval(&self, _x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        Self::value(a)
    }
    fn growth(&self) -> Growth {
        Growth { c1: 0.25, c2: 0.75, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
    fn depends_on_s(&self) -> bool {
        false
    }
    fn gradient(&self, _x: &[f64], _s: &[f64], a: &Matrix, ds: &mut [f64], da: &mut Matrix) -> bool {
        ds.fill(0.0);
        da.data_mut().copy_from_slice(a.data());
        da[(0, 0)] += 0.5 * a[(1, 1)];
        da[(1, 1)] += 0.5 * a[(0, 0)];
        da[(1, 0)] -= 0.5 * a[(0, 1)];
        da[(0, 1)] -= 0.5 * a[(1, 0)];
        true
    }
    fn has_gradient(&self) -> bool {
        true
    }
}
