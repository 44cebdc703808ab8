//! Energy densities `f(x, s, A)` and the parametric (Cartan) integrands.
//!
//! `x` is the source point (length m), `s` the target value (length N) and
//! `A` the N x m gradient.

mod basic;
mod bump;
mod cartan;
mod dominance;
mod finsler;
mod quadratic;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use basic::{Checkerboard, Dirichlet, Layered1d, NonuapIndicator, Oscillating, OscillatingIso, Shifted};
pub use bump::{build_bump_h, probe_matrix_d, spherical_angles, BumpH, BumpedDominance, Hat};
pub use cartan::{AssociatedLagrangian, CartanIntegrand, NonEvenCartan, NonEvenDominance, NormCartan};
pub use dominance::{check_dominance, make_dominance_g, tau, Cutoff, Dominance};
pub use finsler::{make_counterexample_finsler, FinslerAsym};
pub use quadratic::{CoefficientFamily, FamilyMember, Oscillation, QuadraticForm};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Growth bounds `c1 |A|^p <= f <= c2 (1 + |A|^p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Growth {
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
}

pub trait Lagrangian: Send + Sync {
    fn name(&self) -> String;

    /// m
    fn source_dim(&self) -> usize;

    /// N
    fn target_dim(&self) -> usize;

    fn eval(&self, x: &[f64], s: &[f64], a: &Matrix) -> f64;

    fn growth(&self) -> Growth;

    /// `[0,1]^m`-periodic in `x` (true for x-independent densities).
    fn periodic_x(&self) -> bool {
        true
    }

    /// `[0,1]^N`-periodic in `s` (true for s-independent densities).
    fn periodic_s(&self) -> bool {
        true
    }

    fn depends_on_x(&self) -> bool;

    fn depends_on_s(&self) -> bool;

    /// Writes `df/ds` and `df/dA`. Returns false when no analytic derivative
    /// is provided; callers then fall back to finite differences.
    fn gradient(&self, _x: &[f64], _s: &[f64], _a: &Matrix, _ds: &mut [f64], _da: &mut Matrix) -> bool {
        false
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// Human-readable description of where the density is not smooth.
    fn smooth_away_from(&self) -> &str {
        ""
    }

    /// False on (a neighbourhood of) the declared non-smooth locus.
    fn is_regular(&self, _x: &[f64], _s: &[f64], _a: &Matrix) -> bool {
        true
    }
}

/// Central differences of `eval` in `s` and `A`.
pub fn finite_difference_gradient(
    lag: &dyn Lagrangian,
    x: &[f64],
    s: &[f64],
    a: &Matrix,
    ds: &mut [f64],
    da: &mut Matrix,
) {
    let step = |v: f64| 1e-6 * v.abs().max(1.0);
    let mut sp = s.to_vec();
    for i in 0..s.len() {
        let h = step(s[i]);
        sp[i] = s[i] + h;
        let fp = lag.eval(x, &sp, a);
        sp[i] = s[i] - h;
        let fm = lag.eval(x, &sp, a);
        sp[i] = s[i];
        ds[i] = (fp - fm) / (2.0 * h);
    }
    let mut ap = a.clone();
    for k in 0..a.data().len() {
        let v = a.data()[k];
        let h = step(v);
        ap.data_mut()[k] = v + h;
        let fp = lag.eval(x, s, &ap);
        ap.data_mut()[k] = v - h;
        let fm = lag.eval(x, s, &ap);
        ap.data_mut()[k] = v;
        da.data_mut()[k] = (fp - fm) / (2.0 * h);
    }
}

/// Worst relative error (vector 2-norm over all partials) between the
/// analytic gradient and central differences, over `points` seeded samples
/// that avoid the declared non-smooth locus. `None` if the density has no
/// analytic gradient.
pub fn check_lagrangian_derivatives(lag: &dyn Lagrangian, points: usize, seed: u64) -> Option<f64> {
    if !lag.has_gradient() {
        return None;
    }
    let (n, m) = (lag.target_dim(), lag.source_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut x = vec![0.0; m];
    let mut s = vec![0.0; n];
    let mut a = Matrix::zeros(n, m);
    let (mut ds, mut da) = (vec![0.0; n], Matrix::zeros(n, m));
    let (mut fs, mut fa) = (vec![0.0; n], Matrix::zeros(n, m));
    let mut attempts = 0;
    while done < points {
        attempts += 1;
        assert!(attempts < 100 * points + 1000, "could not sample regular points for {}", lag.name());
        x.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        s.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
        a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.5..1.5));
        if !lag.is_regular(&x, &s, &a) {
            continue;
        }
        lag.gradient(&x, &s, &a, &mut ds, &mut da);
        finite_difference_gradient(lag, &x, &s, &a, &mut fs, &mut fa);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (p, q) in ds.iter().chain(da.data()).zip(fs.iter().chain(fa.data())) {
            diff += (p - q) * (p - q);
            norm += p * p;
        }
        let rel = diff.sqrt() / norm.sqrt().max(1e-12);
        worst = worst.max(rel);
        done += 1;
    }
    Some(worst)
}

/// Identifiers accepted by [`builtin`].
pub const BUILTIN_IDS: &[&str] = &[
    "finsler-asym",
    "dominance-3norm",
    "dominance-noneven",
    "cartan-noneven",
    "cartan-norm",
    "riemannian-iso",
    "checkerboard",
    "layered-1d",
    "nonuap-indicator",
    "dirichlet",
];

/// Built-in density by identifier. `shape` = (N, m) is only used by
/// `dirichlet`; the other models have a fixed shape.
pub fn builtin(id: &str, shape: Option<(usize, usize)>) -> Result<Arc<dyn Lagrangian>> {
    let lag: Arc<dyn Lagrangian> = match id {
        "finsler-asym" => Arc::new(make_counterexample_finsler()),
        "dominance-3norm" => Arc::new(make_dominance_g()),
        "dominance-noneven" => Arc::new(NonEvenDominance),
        "cartan-noneven" => Arc::new(AssociatedLagrangian::new(NonEvenCartan)),
        "cartan-norm" => Arc::new(AssociatedLagrangian::new(NormCartan::new(1.0))),
        "riemannian-iso" => Arc::new(OscillatingIso::new(2)),
        "checkerboard" => Arc::new(Checkerboard::new()),
        "layered-1d" => Arc::new(Layered1d::new()),
        "nonuap-indicator" => Arc::new(NonuapIndicator),
        "dirichlet" => {
            let (n, m) = shape.unwrap_or((1, 1));
            Arc::new(Dirichlet::new(n, m))
        }
        _ => return Err(Error::InvalidParameter(format!("unknown model '{id}'"))),
    };
    Ok(lag)
}
