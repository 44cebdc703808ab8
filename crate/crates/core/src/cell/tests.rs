use super::*;
use crate::models::{
    make_counterexample_finsler, make_dominance_g, AssociatedLagrangian, Dirichlet, Growth, Layered1d, NormCartan,
    OscillatingIso,
};

fn dirichlet(n: usize, m: usize) -> Arc<dyn Lagrangian> {
    Arc::new(Dirichlet::new(n, m))
}

fn random_field(problem: &CellProblem, scale: f64, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = problem.zero_field();
    u.values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
    u.zero_boundary();
    u
}

#[test]
fn zero_field_energy_is_norm_of_y() {
    let y: Matrix = "0.3,-1.2;2.0,0.5".parse().unwrap();
    let p = CellProblem::with_resolution(dirichlet(2, 2), y.clone(), 2.0, 4).unwrap();
    let e = cell_energy(&p, &p.zero_field()).unwrap();
    assert!((e - y.norm_sq()).abs() < 1e-14);
}

#[test]
fn one_dimensional_hat() {
    let p = CellProblem::new(dirichlet(1, 1), Matrix::zeros(1, 1), 1.0, Grid::new(1, 1.0, 2).unwrap()).unwrap();
    let u = GridField::from_values(p.grid.clone(), 1, vec![0.0, 0.5, 0.0]).unwrap();
    assert_eq!(cell_energy(&p, &u).unwrap(), 1.0);
}

#[test]
fn layered_zero_field_is_arithmetic_mean() {
    let y = Matrix::identity(1);
    let p = CellProblem::new(Arc::new(Layered1d::new()), y, 1.0, Grid::new(1, 1.0, 8).unwrap()).unwrap();
    assert_eq!(cell_energy(&p, &p.zero_field()).unwrap(), 1.5);
}

#[test]
fn zero_budget_returns_the_start() {
    let y = Matrix::identity(1);
    let p = CellProblem::new(Arc::new(Layered1d::new()), y, 1.0, Grid::new(1, 1.0, 8).unwrap()).unwrap();
    let s = minimize(&p, &SolveConfig { max_iterations: 0, ..Default::default() }).unwrap();
    assert_eq!(s.energy, 1.5);
    assert!(!s.converged && !s.line_search_failed);
    assert_eq!(s.iterations_used, 0);
}

/// Flux constancy: `a_c (Du_c + Y) = q` on every cell with `sum_c Du_c = 0`,
/// so `E = Y^2 / mean(1/a_c)`.
fn layered_discrete_oracle(t: f64, per_unit: usize) -> f64 {
    let lag = Layered1d::new();
    let cells = (t * per_unit as f64).round() as usize;
    let h = t / cells as f64;
    let mean_inv: f64 = (0..cells).map(|c| 1.0 / lag.coefficient(&[(c as f64 + 0.5) * h])).sum::<f64>() / cells as f64;
    1.0 / mean_inv
}

#[test]
fn layered_minimum_matches_flux_oracle() {
    for (t, per_unit) in [(1.0, 16), (2.0, 10), (3.0, 7)] {
        let p = CellProblem::with_resolution(Arc::new(Layered1d::new()), Matrix::identity(1), t, per_unit).unwrap();
        let sol = minimize(&p, &SolveConfig::default()).unwrap();
        assert!(sol.converged);
        let want = layered_discrete_oracle(t, per_unit);
        assert!((sol.energy - want).abs() < 1e-9, "t={t}: {} vs {want}", sol.energy);
    }
}

#[test]
fn refinement_deltas_follow_the_flux_oracle() {
    let rows =
        refinement_deltas(Arc::new(Layered1d::new()), &Matrix::identity(1), 1.0, &[3, 5, 7], &SolveConfig::default())
            .unwrap();
    assert_eq!(rows[0].delta, None);
    for w in rows.windows(2) {
        let want = layered_discrete_oracle(1.0, w[1].per_unit) - layered_discrete_oracle(1.0, w[0].per_unit);
        assert!((w[1].delta.unwrap() - want).abs() < 1e-9);
    }
    assert!(refinement_deltas(Arc::new(Layered1d::new()), &Matrix::identity(1), 1.0, &[4, 4], &SolveConfig::default())
        .is_err());
}

#[test]
fn convex_constant_density_keeps_zero_minimizer() {
    let y: Matrix = "0.4,-0.7;1.1,0.2;-0.3,0.9".parse().unwrap();
    let lag: Arc<dyn Lagrangian> = Arc::new(make_counterexample_finsler());
    let p = CellProblem::with_resolution(lag.clone(), y.clone(), 2.0, 3).unwrap();
    let sol = minimize(&p, &SolveConfig { restarts: 2, ..Default::default() }).unwrap();
    let direct = lag.eval(&[0.0, 0.0], &[0.0; 3], &y);
    assert!((sol.energy - direct).abs() < 1e-8);
    assert!(sol.minimizer.max_abs() < 1e-6);
}

#[test]
fn solution_energy_is_recomputable_bit_for_bit() {
    let p = CellProblem::with_resolution(Arc::new(OscillatingIso::new(2)), "0.7,0.2;-0.1,1.0".parse().unwrap(), 1.0, 6)
        .unwrap();
    let cfg = SolveConfig { restarts: 3, seed: 11, max_iterations: 60, ..Default::default() };
    let a = minimize(&p, &cfg).unwrap();
    let b = minimize(&p, &cfg).unwrap();
    assert_eq!(a.energy.to_bits(), cell_energy(&p, &a.minimizer).unwrap().to_bits());
    assert_eq!(a.energy.to_bits(), b.energy.to_bits());
    assert_eq!(a.minimizer, b.minimizer);
    assert!(a.energy <= cell_energy(&p, &p.zero_field()).unwrap());
    assert_eq!(a.restart_energies.len(), 4);
    assert!(a.energy_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn caller_starts_run_after_the_zero_field() {
    let p = CellProblem::with_resolution(Arc::new(Layered1d::new()), Matrix::identity(1), 1.0, 8).unwrap();
    let start = random_field(&p, 0.3, 1);
    let sol = minimize_with_starts(&p, &SolveConfig::default(), &[start]).unwrap();
    assert_eq!(sol.runs.len(), 2);
    assert!((sol.restart_energies[0] - sol.restart_energies[1]).abs() < 1e-10);
}

#[test]
fn gradient_check_quadratic() {
    let p = CellProblem::with_resolution(dirichlet(2, 2), "1,0.5;0.2,-1".parse().unwrap(), 1.0, 6).unwrap();
    let u = random_field(&p, 0.5, 3);
    assert!(gradient_check(&p, &u, 1e-5).unwrap() < 1e-8);
}

#[test]
fn gradient_check_dominance_density() {
    let y: Matrix = "1.0,0.3;-0.2,0.8;0.5,0.4".parse().unwrap();
    let p = CellProblem::with_resolution(Arc::new(make_dominance_g()), y, 1.0, 5).unwrap();
    let u = random_field(&p, 0.05, 4);
    assert!(gradient_check(&p, &u, 1e-6).unwrap() < 1e-5);
}

#[test]
fn gradient_check_cartan_lagrangian() {
    let y: Matrix = "1.0,0.0;0.0,1.0;0.3,0.2".parse().unwrap();
    let p = CellProblem::with_resolution(Arc::new(AssociatedLagrangian::new(NormCartan::new(1.0))), y, 1.0, 5).unwrap();
    let u = random_field(&p, 0.05, 5);
    assert!(gradient_check(&p, &u, 1e-6).unwrap() < 1e-5);
}

struct NanRight;

impl Lagrangian for NanRight {
    fn name(&self) -> String {
        "nan-right".into()
    }
    fn source_dim(&self) -> usize {
        1
    }
    fn target_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], _s: &[f64], a: &Matrix) -> f64 {
        if x[0] > 0.7 {
            f64::NAN
        } else {
            a.norm_sq()
        }
    }
    fn growth(&self) -> Growth {
        Growth { c1: 1.0, c2: 1.0, p: 2.0 }
    }
    fn depends_on_x(&self) -> bool {
        true
    }
    fn depends_on_s(&self) -> bool {
        false
    }
}

#[test]
fn non_finite_integrand_reports_cell() {
    let p = CellProblem::new(Arc::new(NanRight), Matrix::identity(1), 1.0, Grid::new(1, 1.0, 4).unwrap()).unwrap();
    match cell_energy(&p, &p.zero_field()) {
        Err(Error::NonFiniteIntegrand { cell }) => assert_eq!(cell, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    assert!(CellProblem::new(dirichlet(1, 1), Matrix::identity(1), 2.0, Grid::new(1, 1.0, 4).unwrap()).is_err());
    assert!(CellProblem::new(dirichlet(2, 2), Matrix::identity(1), 1.0, Grid::new(2, 1.0, 4).unwrap()).is_err());
    let p = CellProblem::new(dirichlet(1, 1), Matrix::identity(1), 1.0, Grid::new(1, 1.0, 4).unwrap()).unwrap();
    assert!(minimize(&p, &SolveConfig { shrink: 1.5, ..Default::default() }).is_err());
    let other = GridField::zeros(Grid::new(1, 1.0, 5).unwrap(), 1);
    assert!(cell_energy(&p, &other).is_err());
}
