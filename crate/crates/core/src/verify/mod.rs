//! Checks of the explicit counterexample identities: relative density of the
//! almost-period set, swap contradictions, infeasible product systems, the
//! dominance and parity identities and the worked closing example.

mod products;
mod swap;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{
    probe_matrix_d, BumpH, BumpedDominance, CartanIntegrand, Dominance, Lagrangian, NonuapIndicator, QuadraticForm,
};
use crate::numerics::{norm3, wedge, Grid, Matrix};
use crate::report::{Clause, VerificationReport};

pub use products::{
    least_squares_multistart, product_system_infeasibility, product_system_infeasibility_seeded, ConstraintSpec,
    Expectation, LeastSquaresFit, Monomial, ProductConstraint, ProductConstraintSystem, FEASIBLE_RESIDUAL,
};
pub use swap::{affine_energy, swap_contradiction_demo, SwapMode};

/// `|f(x + tau, Y tau, A) - f(x, 0, A)| < eta` for the indicator density at
/// `x = 0`, `A = 0`. For that density the difference is 0 or 1, so for
/// `eta < 1` this is exactly `Y tau in Z^2`.
pub fn in_period_set(y: &Matrix, tau: &[f64], eta: f64) -> bool {
    let f = NonuapIndicator;
    let a = Matrix::zeros(2, 2);
    let shifted = y.mul_vec(tau);
    let diff = (f.eval(tau, &shifted, &a) - f.eval(&[0.0, 0.0], &[0.0, 0.0], &a)).abs();
    diff < eta
}

fn is_antidiagonal_instance(y: &Matrix) -> bool {
    let r2 = 2f64.sqrt();
    y.shape() == (2, 2) && y[(0, 0)] == 1.0 && y[(0, 1)] == 1.0 && y[(1, 0)] == r2 && y[(1, 1)] == r2
}

/// The period set of the indicator density with `Y = (1, 1; sqrt2, sqrt2)`
/// is the antidiagonal `tau_1 = -tau_2`, which leaves `(2L, 2L)` uncovered by
/// `T + [0, L)^2`.
pub fn relative_density_check(y: &Matrix, eta: f64, inclusion_length: f64) -> VerificationReport {
    let mut report = VerificationReport::new("relative-density");
    let l = inclusion_length;
    let args_ok = 0.0 < eta && eta < 1.0 && l > 0.0 && l.is_finite();
    report.push(Clause::new("0 < eta < 1 and L > 0", args_ok, if args_ok { 1.0 } else { -1.0 }));
    let instance = is_antidiagonal_instance(y);
    report.push(Clause::new("Y has rows (1, 1) and (sqrt2, sqrt2)", instance, if instance { 1.0 } else { -1.0 }));

    let member = in_period_set(y, &[1.0, -1.0], eta);
    let outsider = !in_period_set(y, &[1.0, 0.0], eta);
    let ok = member && outsider;
    report.push(Clause::new("(1, -1) is an almost period and (1, 0) is not", ok, if ok { 1.0 } else { -1.0 }));

    // tau in T means tau = (r, -r). y_1 = 2L - r in [0, L) forces r in
    // (L, 2L], hence y_2 = 2L + r > 3L. The excess over the window is > 2L.
    let excess = 3.0 * l - l;
    let mut sampled_cover = false;
    let steps = 4000;
    for k in 0..=steps {
        let r = -10.0 * l + 20.0 * l * k as f64 / steps as f64;
        let (y1, y2) = (2.0 * l - r, 2.0 * l + r);
        sampled_cover |= (0.0..l).contains(&y1) && (0.0..l).contains(&y2);
    }
    report.push(
        Clause::new(
            "probe (2L, 2L) is not covered by T + [0, L)^2",
            excess > 0.0 && !sampled_cover && instance,
            excess,
        )
        .with("L", l)
        .with("min_y2_given_y1_in_window", 3.0 * l),
    );
    report
}

/// `g(e1 | e2 + e3)` against the six-term combination. Their difference
/// fixes the cutoff value at `2 sqrt2 / 3` to `4/3`, which no admissible
/// cutoff attains.
pub fn dominance_identity_check(g: &Dominance) -> VerificationReport {
    let mut report = VerificationReport::new(format!("dominance-identity[{}]", g.cutoff.name()));
    let admissible = g.cutoff.is_admissible();
    report.push(Clause::new("cutoff is admissible", admissible, if admissible { 1.0 } else { -1.0 }));

    let e = |v: [f64; 3], w: [f64; 3]| g.value(&Matrix::from_columns(&[&v, &w]).unwrap());
    let (e1, e2, e3, z) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0; 3]);
    let e23 = [0.0, 1.0, 1.0];
    let tau0 = 2.0 * 2f64.sqrt() / 3.0;
    let eta0 = g.cutoff.eval(tau0);

    let v1 = e(e1, e23);
    report.push(Clause::close("g(e1|e2+e3) = 15/4 + 3/4 eta(2 sqrt2 / 3)", v1, 3.75 + 0.75 * eta0, 1e-12));
    let v2 = e(e1, e2) + e(e1, e3) - e(e1, z) + e(z, e23) - e(z, e2) - e(z, e3);
    report.push(Clause::close("six-term combination = 19/4", v2, 4.75, 1e-12));

    let implied = (v2 - 3.75) / 0.75;
    report.push(
        Clause::new("implied eta exceeds 1 and the configured value", implied > 1.0 && eta0 < 1.0, implied - eta0)
            .with("implied_eta", implied)
            .with("configured_eta", eta0),
    );
    report
}

/// `u = c (x1 + x2) (1, 1, 1)` on a `width x height` rectangle: the Dirichlet
/// energy is `6 c^2 |Omega|` and the Cartan energy with `phi = |z|` vanishes
/// because both derivative columns coincide.
pub fn lsc_energy_check(width: f64, height: f64, scale: f64) -> Result<VerificationReport> {
    if !(width > 0.0 && height > 0.0) || !scale.is_finite() || !(width * height).is_finite() {
        return Err(Error::InvalidParameter(format!("rectangle {width} x {height}, scale {scale}")));
    }
    let mut report = VerificationReport::new("lsc-energy");
    let n = 64;
    let (hx, hy) = (width / n as f64, height / n as f64);
    let u = |x1: f64, x2: f64| scale * (x1 + x2);
    let mut dirichlet = 0.0;
    let mut cartan = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (x0, y0) = (i as f64 * hx, j as f64 * hy);
            // every component equals u, so the 3 x 2 gradient has equal rows
            let d1 = 0.5 * ((u(x0 + hx, y0) - u(x0, y0)) + (u(x0 + hx, y0 + hy) - u(x0, y0 + hy))) / hx;
            let d2 = 0.5 * ((u(x0, y0 + hy) - u(x0, y0)) + (u(x0 + hx, y0 + hy) - u(x0 + hx, y0))) / hy;
            let cell = hx * hy;
            dirichlet += 3.0 * (d1 * d1 + d2 * d2) * cell;
            cartan += norm3(wedge([d1, d1, d1], [d2, d2, d2])) * cell;
        }
    }
    let measure = width * height;
    let expected = 6.0 * scale * scale * measure;
    report.push(Clause::close("Dirichlet energy = 6 c^2 |Omega|", dirichlet, expected, 1e-10).with("measure", measure));
    report.push(Clause::close("Cartan energy of parallel columns = 0", cartan, 0.0, 1e-10));
    Ok(report)
}

fn closing_form() -> QuadraticForm {
    let r = 0.5f64.sqrt();
    let a = Matrix::from_rows(&[&[r, 0.5], &[-0.5, r]]).unwrap();
    let b = Matrix::from_rows(&[&[r, 0.5, 0.0], &[-0.5, r, 0.0], &[0.0, 0.0, r]]).unwrap();
    QuadraticForm::new(a, b).unwrap()
}

/// `g(A) = |A|^2 / 2 + (A_1 x A_2)_3 / 2`.
pub fn closing_density(a: &Matrix) -> f64 {
    0.5 * a.norm_sq() + 0.5 * wedge(a.column3(0), a.column3(1))[2]
}

/// The non-symmetric constant coefficients with diagonal entries `1/sqrt2`
/// and off-diagonal entries `+-1/2` reproduce `g` pointwise; `a = I/2`,
/// `b = I` gives `|A|^2 / 2`.
pub fn closing_example_identity(samples: usize, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new("closing-example");
    let q = closing_form();
    let iso = QuadraticForm::new(&Matrix::identity(2) * 0.5, Matrix::identity(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut worst_iso) = (0.0f64, 0.0f64);
    let mut a = Matrix::zeros(3, 2);
    for _ in 0..samples {
        a.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
        worst = worst.max((q.value(&a) - closing_density(&a)).abs());
        worst_iso = worst_iso.max((iso.value(&a) - 0.5 * a.norm_sq()).abs());
    }
    report.push(
        Clause::new("quadratic form = g on samples", worst < 1e-12, 1e-12 - worst)
            .with("max_difference", worst)
            .with("samples", samples as f64),
    );
    report.push(
        Clause::new("a = I/2, b = I gives |A|^2 / 2", worst_iso < 1e-12, 1e-12 - worst_iso)
            .with("max_difference", worst_iso),
    );
    report
}

/// `phi(e1) + phi(-e1)`, positive for every admissible integrand.
pub fn cartan_parity_margin(phi: &dyn CartanIntegrand) -> VerificationReport {
    let mut report = VerificationReport::new(format!("cartan-parity[{}]", phi.name()));
    let s = [0.0; 3];
    let (p, m) = (phi.phi(s, [1.0, 0.0, 0.0]), phi.phi(s, [-1.0, 0.0, 0.0]));
    report.push(Clause::positive("phi(e1) + phi(-e1) > 0", p + m).with("phi_e1", p).with("phi_minus_e1", m));
    report
}

/// `H(D~) > H(D)` for the shipped bump, and the resulting energy gap of
/// `g + amplitude H` between the affine maps `D~ x` and `D x`.
pub fn bump_inequality_check(
    base: Arc<dyn Lagrangian>,
    h: &BumpH,
    amplitude: f64,
    grid: &Grid,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(format!("bump[k={},eps={}]", h.k, h.eps));
    let d = probe_matrix_d();
    let dt = d.swap_columns(0, 1);
    let (hd, hdt) = (h.eval(&d), h.eval(&dt));
    report.push(Clause::positive("H(D~) - H(D) > 0", hdt - hd).with("h_d", hd).with("h_d_swapped", hdt));
    let bumped = BumpedDominance::new(base, h.clone(), amplitude)?;
    let gap = affine_energy(&bumped, &dt, grid) - affine_energy(&bumped, &d, grid);
    report.push(Clause::positive("energy gap of the bumped density", gap).with("amplitude", amplitude));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_bump_h, make_dominance_g, Cutoff, NonEvenCartan, NormCartan};

    fn nonuap_y() -> Matrix {
        let r2 = 2f64.sqrt();
        Matrix::from_rows(&[&[1.0, 1.0], &[r2, r2]]).unwrap()
    }

    #[test]
    fn relative_density_fails_at_two_scales() {
        for l in [1.0, 10.0] {
            let r = relative_density_check(&nonuap_y(), 0.5, l);
            assert!(r.overall(), "{}", r.to_text());
            assert_eq!(r.clauses.last().unwrap().margin, 2.0 * l);
        }
        assert!(in_period_set(&nonuap_y(), &[5.0, -5.0], 0.5));
        assert!(!relative_density_check(&Matrix::identity(2), 0.5, 1.0).overall());
        assert!(!relative_density_check(&nonuap_y(), 1.5, 1.0).overall());
    }

    #[test]
    fn dominance_identities() {
        let r = dominance_identity_check(&make_dominance_g());
        assert!(r.overall(), "{}", r.to_text());
        let implied = r.clause("implied").unwrap().value("implied_eta").unwrap();
        assert!((implied - 4.0 / 3.0).abs() < 1e-12);
        let cubic = dominance_identity_check(&Dominance::new(Cutoff::Cubic));
        let a = r.clause("six-term").unwrap().value("actual").unwrap();
        let b = cubic.clause("six-term").unwrap().value("actual").unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn constant_cutoff_fails_admissibility() {
        let r = dominance_identity_check(&Dominance::new(Cutoff::ConstantOne));
        assert!(!r.clause("admissible").unwrap().passed);
        assert!(!r.overall());
    }

    #[test]
    fn lsc_values() {
        let r = lsc_energy_check(1.0, 1.0, 1.0).unwrap();
        assert!(r.overall());
        assert!((r.clauses[0].value("actual").unwrap() - 6.0).abs() < 1e-10);
        let r = lsc_energy_check(2.0, 1.0, 1.0).unwrap();
        assert!((r.clauses[0].value("actual").unwrap() - 12.0).abs() < 1e-10);
        let r = lsc_energy_check(1.0, 1.0, 0.0).unwrap();
        assert_eq!(r.clauses[0].value("actual"), Some(0.0));
        assert!(lsc_energy_check(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn closing_example_at_basis_pair() {
        let a = Matrix::from_columns(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]).unwrap();
        assert!((closing_form().value(&a) - 1.5).abs() < 1e-15);
        assert_eq!(closing_density(&a), 1.5);
        assert_eq!(closing_form().value(&Matrix::zeros(3, 2)), 0.0);
        assert!(closing_example_identity(1000, 7).overall());
    }

    #[test]
    fn parity_margins() {
        assert_eq!(cartan_parity_margin(&NormCartan::new(1.0)).clauses[0].margin, 2.0);
        assert_eq!(cartan_parity_margin(&NonEvenCartan).clauses[0].margin, 2.0);
    }

    #[test]
    fn bump_gap_is_positive() {
        let h = build_bump_h(4.0, 0.02).unwrap();
        let grid = Grid::new(2, 1.0, 4).unwrap();
        let r = bump_inequality_check(Arc::new(make_dominance_g()), &h, 0.1, &grid).unwrap();
        assert!(r.overall(), "{}", r.to_text());
    }
}
