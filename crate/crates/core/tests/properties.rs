use std::sync::Arc;

use homogen::cell::{minimize, CellProblem, SolveConfig};
use homogen::models::{
    make_counterexample_finsler, make_dominance_g, tau, CoefficientFamily, Dirichlet, Lagrangian, Layered1d,
    NonEvenDominance, Shifted,
};
use homogen::numerics::{gradient_at_cells, integrate_cellwise, wedge};
use homogen::tiling::{build_tiling, patch_field, verify_tiling, TilingParams};
use homogen::verify::{
    closing_example_identity, least_squares_multistart, swap_contradiction_demo, ConstraintSpec, Expectation,
    ProductConstraintSystem, SwapMode,
};
use homogen::{Clause, Grid, GridField, Matrix, VerificationReport};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-3.0f64..3.0)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn rotation(alpha: f64, beta: f64, gamma: f64) -> Matrix {
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let (cb, sb) = (beta.cos(), beta.sin());
    let (cg, sg) = (gamma.cos(), gamma.sin());
    let rz = Matrix::from_rows(&[&[ca, -sa, 0.0], &[sa, ca, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
    let ry = Matrix::from_rows(&[&[cb, 0.0, sb], &[0.0, 1.0, 0.0], &[-sb, 0.0, cb]]).unwrap();
    let rx = Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, cg, -sg], &[0.0, sg, cg]]).unwrap();
    rz.matmul(&ry).matmul(&rx)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affine_fields_have_constant_gradient(
        (n, m) in (1usize..4, 1usize..3),
        side in 0.5f64..3.0,
        nodes in 2usize..7,
        seed in any::<u64>(),
    ) {
        let data: Vec<f64> = (0..n * m).map(|k| ((seed >> (k % 60)) & 0xff) as f64 / 64.0 - 2.0).collect();
        let p = Matrix::from_vec(n, m, data).unwrap();
        let grid = Grid::new(m, side, nodes).unwrap();
        let u = GridField::from_fn(grid, n, |x| p.mul_vec(x));
        for g in gradient_at_cells(&u, n).unwrap() {
            for (a, b) in g.data().iter().zip(p.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()) * (1.0 + side));
            }
        }
    }

    #[test]
    fn integrating_one_gives_the_volume(dim in 1usize..4, side in 0.25f64..4.0, nodes in 1usize..6) {
        let grid = Grid::new(dim, side, nodes).unwrap();
        let total = integrate_cellwise(&vec![1.0; grid.cell_count()], &grid).unwrap();
        let volume = side.powi(dim as i32);
        prop_assert!((total - volume).abs() <= 1e-12 * volume);
    }

    #[test]
    fn wedge_is_bilinear_antisymmetric_and_obeys_lagrange(a in vec3(), b in vec3(), c in vec3(), k in -3.0f64..3.0) {
        let ab = wedge(a, b);
        let ba = wedge(b, a);
        for i in 0..3 {
            prop_assert_eq!(ab[i], -ba[i]);
        }
        let sum = [a[0] + k * c[0], a[1] + k * c[1], a[2] + k * c[2]];
        let lhs = wedge(sum, b);
        let cb = wedge(c, b);
        for i in 0..3 {
            prop_assert!((lhs[i] - (ab[i] + k * cb[i])).abs() <= 1e-10);
        }
        let lagrange = dot(a, a) * dot(b, b) - dot(a, b).powi(2);
        prop_assert!((dot(ab, ab) - lagrange).abs() <= 1e-9 * (1.0 + lagrange.abs()));
    }

    #[test]
    fn finsler_density_is_sandwiched(a in matrix(3, 2)) {
        let lag = make_counterexample_finsler();
        let v = lag.eval(&[0.0, 0.0], &[0.0; 3], &a);
        let q = a.norm_sq();
        prop_assert!(0.5 * q - 1e-12 <= v && v <= 2.0 * q + 1e-12);
    }

    #[test]
    fn dominance_is_two_homogeneous(a in matrix(3, 2), k in 0usize..3) {
        let t = [0.5, 2.0, 7.0][k];
        let g = make_dominance_g();
        let lhs = g.value(&(&a * t));
        let rhs = t * t * g.value(&a);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn tau_is_rotation_and_swap_invariant(a in matrix(3, 2), angles in prop::array::uniform3(0.0f64..6.3)) {
        prop_assume!(a.norm_sq() > 1e-3);
        let r = rotation(angles[0], angles[1], angles[2]);
        let base = tau(&a);
        prop_assert!((tau(&r.matmul(&a)) - base).abs() <= 1e-10);
        prop_assert!((tau(&a.swap_columns(0, 1)) - base).abs() <= 1e-12);
    }

    #[test]
    fn tilings_verify(t in 1i64..5, extra in 0i64..30, m in 1usize..3) {
        let s = t + 5 + extra;
        let y = Matrix::from_vec(1, m, vec![0.5; m]).unwrap();
        let tiling = build_tiling(TilingParams { t, s, m, y }).unwrap();
        let report = verify_tiling(&tiling);
        prop_assert!(report.overall(), "{}", report.to_text());
        prop_assert_eq!(tiling.len() as i64, tiling.expected_count());
    }

    #[test]
    fn report_passes_iff_every_clause_passes(flags in prop::collection::vec(any::<bool>(), 0..8)) {
        let mut report = VerificationReport::new("conjunction");
        for (k, &f) in flags.iter().enumerate() {
            report.push(Clause::new(format!("clause {k}"), f, if f { 1.0 } else { -1.0 }));
        }
        prop_assert_eq!(report.overall(), !flags.is_empty() && flags.iter().all(|&f| f));
    }

    #[test]
    fn closing_identity_holds_for_any_seed(seed in any::<u64>()) {
        prop_assert!(closing_example_identity(50, seed).overall());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn descent_is_monotone_and_deterministic(seed in any::<u64>(), scale in 0.0f64..0.5) {
        let y = Matrix::from_rows(&[&[1.0]]).unwrap();
        let prob = CellProblem::with_resolution(Arc::new(Layered1d::new()), y, 2.0, 8).unwrap();
        let cfg = SolveConfig { seed, init_scale: scale, restarts: 1, max_iterations: 60, ..SolveConfig::default() };
        let a = minimize(&prob, &cfg).unwrap();
        let b = minimize(&prob, &cfg).unwrap();
        prop_assert!(a.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        prop_assert_eq!(a.minimizer.values(), b.minimizer.values());
    }

    #[test]
    fn convex_cell_minimum_is_the_affine_energy(y in matrix(2, 2), t in 1usize..3) {
        let prob = CellProblem::with_resolution(Arc::new(Dirichlet::new(2, 2)), y.clone(), t as f64, 4).unwrap();
        let sol = minimize(&prob, &SolveConfig { init_scale: 0.3, ..SolveConfig::default() }).unwrap();
        prop_assert!((sol.energy - y.norm_sq()).abs() <= 1e-8);
    }

    #[test]
    fn integer_shifts_leave_the_cell_energy_unchanged(shift in -3i32..4, y in -2.0f64..2.0) {
        let ym = Matrix::from_rows(&[&[y]]).unwrap();
        let base: Arc<dyn Lagrangian> = Arc::new(Layered1d::new());
        let moved: Arc<dyn Lagrangian> = Arc::new(Shifted::new(base.clone(), vec![shift as f64]));
        let cfg = SolveConfig::default();
        let a = minimize(&CellProblem::with_resolution(base, ym.clone(), 2.0, 16).unwrap(), &cfg).unwrap();
        let b = minimize(&CellProblem::with_resolution(moved, ym, 2.0, 16).unwrap(), &cfg).unwrap();
        prop_assert!((a.energy - b.energy).abs() <= 1e-12 * (1.0 + a.energy));
    }

    #[test]
    fn patched_fields_vanish_on_the_boundary_and_copy_the_boxes(
        t in 1i64..3,
        extra in 0i64..8,
        m in 1usize..3,
        npu in 1usize..4,
        values in prop::collection::vec(-1.0f64..1.0, 64),
        ys in prop::collection::vec(-1.5f64..1.5, 2),
    ) {
        let s = t + 5 + extra;
        let y = Matrix::from_vec(1, m, ys[..m].to_vec()).unwrap();
        let tiling = build_tiling(TilingParams { t, s, m, y: y.clone() }).unwrap();
        let grid_t = Grid::per_unit(m, t as f64, npu).unwrap();
        let mut u_t = GridField::zeros(grid_t.clone(), 1);
        for k in 0..grid_t.node_count() {
            u_t.set(k, 0, values[k % values.len()]);
        }
        u_t.zero_boundary();
        let grid_s = Grid::per_unit(m, s as f64, npu).unwrap();
        let u_s = patch_field(&u_t, &tiling, &y, &grid_s).unwrap();
        prop_assert!(u_s.boundary_is_zero());

        let mut local = vec![0usize; m];
        for (z, sigma) in tiling.sigma.iter().enumerate() {
            let offset = tiling.offset(z)[0];
            for node in 0..grid_t.node_count() {
                grid_t.node_multi_index(node, &mut local);
                let global: Vec<usize> =
                    local.iter().zip(sigma).map(|(&l, &sg)| sg as usize * npu + l).collect();
                let expected = u_t.get(node, 0) + offset;
                prop_assert_eq!(u_s.get(grid_s.node_index(&global), 0).to_bits(), expected.to_bits());
            }
        }
    }

    #[test]
    fn systems_built_around_a_point_are_solved(
        point in prop::collection::vec(-1.5f64..1.5, 4),
        coefs in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let names = [("a1", "b1"), ("a1", "b2"), ("a2", "b1"), ("a2", "b2")];
        let value = |a: &str, b: &str| {
            let va = if a == "a1" { point[0] } else { point[1] };
            let vb = if b == "b1" { point[2] } else { point[3] };
            va * vb
        };
        let constraints: Vec<ConstraintSpec> = (0..3)
            .map(|r| {
                let terms: Vec<(f64, &str, &str)> =
                    names.iter().enumerate().map(|(k, &(a, b))| (coefs[4 * r + k], a, b)).collect();
                let target = terms.iter().map(|&(c, a, b)| c * value(a, b)).sum();
                (terms, target)
            })
            .collect();
        let sys = ProductConstraintSystem::new("random-feasible", &constraints, Expectation::Feasible).unwrap();
        let fit = least_squares_multistart(&sys, 64, 3);
        prop_assert!(fit.residual_norm < 1e-8, "residual {}", fit.residual_norm);
    }

    #[test]
    fn isotropic_family_energies_agree_bitwise_under_swap(seed in any::<u64>(), members in 1usize..4) {
        let grid = Grid::new(2, 1.0, 8).unwrap();
        let family = CoefficientFamily::isotropic(members, 3);
        let report =
            swap_contradiction_demo(&NonEvenDominance, &family, &grid, SwapMode::Isotropic, None, seed).unwrap();
        let clause = report.clause("bitwise").unwrap();
        prop_assert!(clause.passed);
        prop_assert!(report.clause("family energies agree").unwrap().passed);
    }
}
