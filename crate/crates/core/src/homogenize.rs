//! Estimates of the homogenized density from cell solves on growing cubes,
//! plus probes of quasiconvexity, rank-one convexity, column-permutation
//! symmetry and oscillating-coefficient limits.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{minimize, CellProblem, SolveConfig};
use crate::error::{Error, Result};
use crate::models::Lagrangian;
use crate::numerics::{Grid, Matrix};
use crate::report::{Clause, VerificationReport};

pub const FIT_MODEL: &str = "g_t ~ f_hom + C/t (least squares)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ResolutionRule {
    /// `n` intervals per unit length, so the cube of side `t` gets `n t`.
    PerUnit(usize),
    /// `n` intervals per side regardless of `t`.
    Fixed(usize),
}

impl Default for ResolutionRule {
    fn default() -> Self {
        ResolutionRule::PerUnit(32)
    }
}

impl ResolutionRule {
    pub fn grid(&self, dim: usize, t: f64) -> Result<Grid> {
        match *self {
            ResolutionRule::PerUnit(n) => Grid::per_unit(dim, t, n),
            ResolutionRule::Fixed(n) => Grid::new(dim, t, n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomSchedule {
    pub t_values: Vec<f64>,
    pub resolution: ResolutionRule,
    pub solve: SolveConfig,
}

impl HomSchedule {
    pub fn new(t_values: Vec<f64>, resolution: ResolutionRule, solve: SolveConfig) -> Result<Self> {
        let s = HomSchedule { t_values, resolution, solve };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_values.len() < 2 {
            return Err(Error::InvalidParameter("schedule needs at least two t values".into()));
        }
        if self.t_values.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter("t values must be positive".into()));
        }
        if self.t_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("t values must be strictly increasing".into()));
        }
        self.solve.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub t: f64,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub line_search_failed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomResult {
    pub y: Matrix,
    pub rows: Vec<ScheduleRow>,
    pub g_t_estimates: Vec<f64>,
    pub f_hom_estimate: f64,
    pub slope: f64,
    /// `g_t - (f_hom + C/t)` per point.
    pub residuals: Vec<f64>,
    /// Euclidean norm of `residuals`.
    pub fit_residual: f64,
    pub model: &'static str,
    pub all_converged: bool,
    pub line_search_failed: bool,
}

impl HomResult {
    /// `c1 |Y|^p <= f_hom <= c2 (1 + |Y|^p)` up to `tol`.
    pub fn growth_sandwich(&self, lag: &dyn Lagrangian, tol: f64) -> bool {
        let g = lag.growth();
        let np = self.y.norm().powf(g.p);
        g.c1 * np <= self.f_hom_estimate + tol && self.f_hom_estimate <= g.c2 * (1.0 + np) + tol
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::from("t,energy,converged,iterations\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:?},{},{}\n", r.t, r.energy, r.converged, r.iterations));
        }
        out
    }
}

/// Least-squares intercept and slope of `g` against `1/t`.
pub fn fit_inverse_t(t: &[f64], g: &[f64]) -> (f64, f64, Vec<f64>) {
    let k = t.len() as f64;
    let xs: Vec<f64> = t.iter().map(|v| 1.0 / v).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = g.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(g).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let res = xs.iter().zip(g).map(|(x, y)| y - (intercept + slope * x)).collect();
    (intercept, slope, res)
}

fn check_homogenizable(lag: &dyn Lagrangian, y: &Matrix) -> Result<()> {
    if y.shape() != (lag.target_dim(), lag.source_dim()) {
        return Err(Error::Dimension(format!(
            "Y is {}x{} but {} expects {}x{}",
            y.rows(),
            y.cols(),
            lag.name(),
            lag.target_dim(),
            lag.source_dim()
        )));
    }
    if !lag.periodic_x() {
        return Err(Error::InvalidParameter(format!("{} is not [0,1]^m-periodic in x", lag.name())));
    }
    if lag.depends_on_s() && !lag.periodic_s() {
        return Err(Error::InvalidParameter(format!("{} is not [0,1]^N-periodic in s", lag.name())));
    }
    if !(lag.growth().c1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{} has no coercive lower growth bound (c1 = {})",
            lag.name(),
            lag.growth().c1
        )));
    }
    Ok(())
}

/// One cell solve per `t`, then the `1/t` extrapolation.
pub fn estimate_f_hom(lag: Arc<dyn Lagrangian>, y: &Matrix, schedule: &HomSchedule) -> Result<HomResult> {
    schedule.validate()?;
    check_homogenizable(lag.as_ref(), y)?;
    let rows = schedule
        .t_values
        .par_iter()
        .map(|&t| {
            let grid = schedule.resolution.grid(lag.source_dim(), t)?;
            let problem = CellProblem::new(lag.clone(), y.clone(), t, grid)?;
            let sol = minimize(&problem, &schedule.solve)?;
            Ok(ScheduleRow {
                t,
                energy: sol.energy,
                converged: sol.converged,
                iterations: sol.iterations_used,
                line_search_failed: sol.line_search_failed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let g: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let (f, c, residuals) = fit_inverse_t(&schedule.t_values, &g);
    let fit_residual = residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(HomResult {
        y: y.clone(),
        all_converged: rows.iter().all(|r| r.converged),
        line_search_failed: rows.iter().any(|r| r.line_search_failed),
        rows,
        g_t_estimates: g,
        f_hom_estimate: f,
        slope: c,
        residuals,
        fit_residual,
        model: FIT_MODEL,
    })
}

const PROBE_INTERVALS: usize = 4;

fn factorial(m: usize) -> usize {
    (1..=m).product()
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Most negative `integral over (0,1)^m of density(Y + D phi) - density(Y)`
/// over seeded piecewise-affine fields `phi` vanishing on the boundary.
/// Fields are affine on the simplices of the Kuhn triangulation of a
/// `4^m` grid, so the integrals are exact sums. Half of the fields are
/// rank-one (`a psi(x)`), half have independent components.
pub fn quasiconvexity_probe(density: &dyn Fn(&Matrix) -> f64, y: &Matrix, samples: usize, seed: u64) -> f64 {
    let (n, m) = y.shape();
    let grid = Grid::new(m, 1.0, PROBE_INTERVALS).expect("probe grid");
    let h = grid.spacing();
    let perms = permutations(m);
    let weight = 1.0 / (grid.cell_count() * factorial(m)) as f64;
    let base = density(y);
    let amp = 0.5 * (1.0 + y.norm());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let nodes = grid.node_count();
    let mut phi = vec![0.0; nodes * n];
    let mut cell_idx = vec![0usize; m];
    let mut vert = vec![0usize; m];
    let mut a = Matrix::zeros(n, m);
    for k in 0..samples {
        phi.fill(0.0);
        if k % 2 == 0 {
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for node in 0..nodes {
                if !grid.is_boundary_node(node) {
                    let psi = rng.gen_range(-amp..amp);
                    for i in 0..n {
                        phi[node * n + i] = dir[i] * psi;
                    }
                }
            }
        } else {
            for node in 0..nodes {
                if !grid.is_boundary_node(node) {
                    for i in 0..n {
                        phi[node * n + i] = rng.gen_range(-amp..amp);
                    }
                }
            }
        }
        let mut total = 0.0;
        for cell in 0..grid.cell_count() {
            grid.cell_multi_index(cell, &mut cell_idx);
            for p in &perms {
                vert.copy_from_slice(&cell_idx);
                let mut prev = grid.node_index(&vert);
                for &axis in p {
                    vert[axis] += 1;
                    let next = grid.node_index(&vert);
                    for i in 0..n {
                        a[(i, axis)] = y[(i, axis)] + (phi[next * n + i] - phi[prev * n + i]) / h;
                    }
                    prev = next;
                }
                total += density(&a);
            }
        }
        worst = worst.min(total * weight - base);
    }
    worst
}

/// Most negative centred second difference of `density` along seeded
/// rank-one lines `Y + tau a b^T`, `tau` in `[-1, 1]` with step 0.1.
pub fn rank_one_probe(density: &dyn Fn(&Matrix) -> f64, y: &Matrix, directions: usize, seed: u64) -> f64 {
    let (n, m) = y.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 0.1;
    let mut worst = f64::INFINITY;
    for _ in 0..directions {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir = Matrix::rank_one(&a, &b);
        let at = |tau: f64| density(&(y + &(&dir * tau)));
        for j in -9..=9 {
            let tau = j as f64 * step;
            let d2 = (at(tau + step) - 2.0 * at(tau) + at(tau - step)) / (step * step);
            worst = worst.min(d2);
        }
    }
    worst
}

/// Compares `f_hom(Y)` with `f_hom` at `Y` with columns `perm` exchanged.
/// Passes iff the difference is at most the two fit residuals plus 2% of
/// the larger estimate.
pub fn permutation_symmetry_check(
    lag: Arc<dyn Lagrangian>,
    y: &Matrix,
    schedule: &HomSchedule,
    perm: (usize, usize),
) -> Result<VerificationReport> {
    let m = y.cols();
    if perm.0 >= m || perm.1 >= m {
        return Err(Error::InvalidParameter(format!("column transposition {perm:?} out of range for m = {m}")));
    }
    let first = estimate_f_hom(lag.clone(), y, schedule)?;
    let second = if perm.0 == perm.1 {
        first.clone()
    } else {
        estimate_f_hom(lag.clone(), &y.swap_columns(perm.0, perm.1), schedule)?
    };
    let diff = (first.f_hom_estimate - second.f_hom_estimate).abs();
    let allowed =
        first.fit_residual + second.fit_residual + 0.02 * first.f_hom_estimate.abs().max(second.f_hom_estimate.abs());
    let mut report = VerificationReport::new("permutation-symmetry");
    report.push(
        Clause::new("|f_hom(Y) - f_hom(Y swapped)| within residuals + 2%", diff <= allowed, allowed - diff)
            .with("f_hom", first.f_hom_estimate)
            .with("f_hom_swapped", second.f_hom_estimate)
            .with("difference", diff)
            .with("residual", first.fit_residual)
            .with("residual_swapped", second.fit_residual),
    );
    if !(first.all_converged && second.all_converged) {
        report.note("some cell solves hit the iteration budget");
    }
    if first.line_search_failed || second.line_search_failed {
        report.note("line search failed in at least one cell solve");
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimum of the oscillating problem on `(0,1)^m` for one `eps`, solved as
/// the cell problem on `(0, 1/eps)^m`.
pub fn oscillating_minimum(lag: Arc<dyn Lagrangian>, y: &Matrix, eps: f64, schedule: &HomSchedule) -> Result<SweepRow> {
    let t = 1.0 / eps;
    let grid = schedule.resolution.grid(lag.source_dim(), t)?;
    let problem = CellProblem::new(lag, y.clone(), t, grid)?;
    let sol = minimize(&problem, &schedule.solve)?;
    Ok(SweepRow { epsilon: eps, energy: sol.energy, converged: sol.converged, iterations: sol.iterations_used })
}

/// Passes iff the smallest `eps` minimum lies within 3% of the estimate
/// from `schedule`.
pub fn epsilon_sweep_compare(
    lag: Arc<dyn Lagrangian>,
    y: &Matrix,
    epsilons: &[f64],
    schedule: &HomSchedule,
) -> Result<(VerificationReport, Vec<SweepRow>, HomResult)> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("epsilons must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("epsilons must be strictly decreasing".into()));
    }
    let hom = estimate_f_hom(lag.clone(), y, schedule)?;
    let rows =
        epsilons.par_iter().map(|&e| oscillating_minimum(lag.clone(), y, e, schedule)).collect::<Result<Vec<_>>>()?;
    let last = rows.last().expect("non-empty").energy;
    let tol = 0.03 * hom.f_hom_estimate.abs();
    let mut report = VerificationReport::new("epsilon-sweep");
    let mut clause = Clause::close("smallest-eps minimum within 3% of f_hom estimate", last, hom.f_hom_estimate, tol)
        .with("f_hom", hom.f_hom_estimate);
    for r in &rows {
        clause = clause.with(format!("eps={}", r.epsilon), r.energy);
    }
    report.push(clause);
    if rows.iter().any(|r| !r.converged) || !hom.all_converged {
        report.note("some cell solves hit the iteration budget");
    }
    Ok((report, rows, hom))
}
