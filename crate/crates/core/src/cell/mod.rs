//! Discrete cell problem: minimize
//! `(1/t^m) * integral over (0,t)^m of f(x, u + Yx, Du + Y)` over nodal
//! fields `u` vanishing on the boundary of the cube.

mod precond;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{finite_difference_gradient, Lagrangian};
use crate::numerics::{Grid, GridField, Matrix, Stencil};
use precond::Preconditioner;

const PARALLEL_CELLS: usize = 4096;
const CHUNK_CELLS: usize = 1024;

pub struct CellProblem {
    pub lagrangian: Arc<dyn Lagrangian>,
    pub y: Matrix,
    pub t: f64,
    pub grid: Grid,
    pub p_exponent: f64,
    stencil: Stencil,
    interior: Vec<usize>,
}

impl CellProblem {
    pub fn new(lagrangian: Arc<dyn Lagrangian>, y: Matrix, t: f64, grid: Grid) -> Result<Self> {
        if (grid.side_length() - t).abs() > 1e-12 * t.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid side length {} differs from t = {t}",
                grid.side_length()
            )));
        }
        if y.shape() != (lagrangian.target_dim(), lagrangian.source_dim()) {
            return Err(Error::Dimension(format!(
                "Y is {}x{} but the density expects {}x{}",
                y.rows(),
                y.cols(),
                lagrangian.target_dim(),
                lagrangian.source_dim()
            )));
        }
        if grid.dim() != lagrangian.source_dim() {
            return Err(Error::Dimension(format!(
                "grid dimension {} differs from m = {}",
                grid.dim(),
                lagrangian.source_dim()
            )));
        }
        let p_exponent = lagrangian.growth().p;
        let stencil = Stencil::new(&grid);
        let interior = grid.interior_nodes();
        Ok(CellProblem { lagrangian, y, t, grid, p_exponent, stencil, interior })
    }

    /// Cube `(0,t)^m` with `per_unit` intervals per unit length.
    pub fn with_resolution(lagrangian: Arc<dyn Lagrangian>, y: Matrix, t: f64, per_unit: usize) -> Result<Self> {
        let grid = Grid::per_unit(lagrangian.source_dim(), t, per_unit)?;
        Self::new(lagrangian, y, t, grid)
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn m(&self) -> usize {
        self.y.cols()
    }

    pub fn zero_field(&self) -> GridField {
        GridField::zeros(self.grid.clone(), self.n())
    }

    fn check_field(&self, u: &GridField) -> Result<()> {
        if u.grid() != &self.grid || u.components() != self.n() {
            return Err(Error::Dimension("field does not live on the problem grid".into()));
        }
        Ok(())
    }

    /// Per-cell integrand values and, if requested, the partials
    /// `(df/dA, df/ds)` packed with stride `N*m + N`.
    fn eval_range(&self, values: &[f64], first: usize, f_out: &mut [f64], d_out: Option<&mut [f64]>) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let lag = self.lagrangian.as_ref();
        let analytic = lag.has_gradient();
        let mut s = vec![0.0; n];
        let mut a = Matrix::zeros(n, m);
        let mut ds = vec![0.0; n];
        let mut da = Matrix::zeros(n, m);
        let stride = n * m + n;
        let mut d_out = d_out;
        for (k, fv) in f_out.iter_mut().enumerate() {
            let cell = first + k;
            let x = self.stencil.midpoint(cell);
            self.stencil.corner_average(values, n, cell, &mut s);
            self.stencil.cell_gradient(values, n, cell, &mut a);
            for i in 0..n {
                let mut yx = 0.0;
                for al in 0..m {
                    yx += self.y[(i, al)] * x[al];
                    a[(i, al)] += self.y[(i, al)];
                }
                s[i] += yx;
            }
            let f = lag.eval(x, &s, &a);
            if !f.is_finite() {
                return Err(Error::NonFiniteIntegrand { cell });
            }
            *fv = f;
            if let Some(d) = d_out.as_deref_mut() {
                if !(analytic && lag.gradient(x, &s, &a, &mut ds, &mut da)) {
                    finite_difference_gradient(lag, x, &s, &a, &mut ds, &mut da);
                }
                let slot = &mut d[k * stride..(k + 1) * stride];
                slot[..n * m].copy_from_slice(da.data());
                slot[n * m..].copy_from_slice(&ds);
            }
        }
        Ok(())
    }

    fn eval_cells(&self, values: &[f64], f_out: &mut [f64], d_out: Option<&mut [f64]>) -> Result<()> {
        let cells = self.grid.cell_count();
        let stride = self.n() * self.m() + self.n();
        if cells < PARALLEL_CELLS {
            return self.eval_range(values, 0, f_out, d_out);
        }
        match d_out {
            None => f_out
                .par_chunks_mut(CHUNK_CELLS)
                .enumerate()
                .try_for_each(|(c, fs)| self.eval_range(values, c * CHUNK_CELLS, fs, None)),
            Some(d) => f_out
                .par_chunks_mut(CHUNK_CELLS)
                .zip(d.par_chunks_mut(CHUNK_CELLS * stride))
                .enumerate()
                .try_for_each(|(c, (fs, ds))| self.eval_range(values, c * CHUNK_CELLS, fs, Some(ds))),
        }
    }

    /// Energy and, when `grad` is given, its gradient with boundary entries
    /// set to zero.
    fn energy_impl(&self, values: &[f64], grad: Option<&mut [f64]>, buf: &mut EvalBuffers) -> Result<f64> {
        let cells = self.grid.cell_count();
        buf.f.resize(cells, 0.0);
        let energy = match grad {
            None => {
                self.eval_cells(values, &mut buf.f, None)?;
                buf.f.iter().sum::<f64>() / cells as f64
            }
            Some(g) => {
                let (n, m) = (self.n(), self.m());
                let stride = n * m + n;
                buf.d.resize(cells * stride, 0.0);
                self.eval_cells(values, &mut buf.f, Some(&mut buf.d))?;
                g.fill(0.0);
                let w = 1.0 / cells as f64;
                let mut da = Matrix::zeros(n, m);
                for cell in 0..cells {
                    let slot = &buf.d[cell * stride..(cell + 1) * stride];
                    da.data_mut().copy_from_slice(&slot[..n * m]);
                    self.stencil.scatter(n, cell, &da, &slot[n * m..], w, g);
                }
                for node in 0..self.grid.node_count() {
                    if self.grid.is_boundary_node(node) {
                        g[node * n..(node + 1) * n].fill(0.0);
                    }
                }
                buf.f.iter().sum::<f64>() / cells as f64
            }
        };
        Ok(energy)
    }
}

#[derive(Default)]
struct EvalBuffers {
    f: Vec<f64>,
    d: Vec<f64>,
}

/// Discrete cell energy of `u` (midpoint rule, corner-averaged values).
pub fn cell_energy(problem: &CellProblem, u: &GridField) -> Result<f64> {
    problem.check_field(u)?;
    problem.energy_impl(u.values(), None, &mut EvalBuffers::default())
}

/// Integrand value on every cell; the energy is their mean.
pub fn cell_integrand_values(problem: &CellProblem, u: &GridField) -> Result<Vec<f64>> {
    problem.check_field(u)?;
    let mut f = vec![0.0; problem.grid.cell_count()];
    problem.eval_cells(u.values(), &mut f, None)?;
    Ok(f)
}

/// Energy gradient with respect to the nodal values (zero on the boundary).
pub fn cell_energy_gradient(problem: &CellProblem, u: &GridField) -> Result<Vec<f64>> {
    problem.check_field(u)?;
    let mut g = vec![0.0; u.values().len()];
    problem.energy_impl(u.values(), Some(&mut g), &mut EvalBuffers::default())?;
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub restarts: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub shrink: f64,
    pub armijo: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            restarts: 0,
            init_scale: 0.1,
            seed: 0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidParameter("gradient tolerance must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter("line-search shrink factor must lie in (0,1)".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidParameter("sufficient-decrease constant must lie in (0,1)".into()));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::InvalidParameter("init_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSolution {
    pub energy: f64,
    #[serde(skip)]
    pub minimizer: GridField,
    pub iterations_used: usize,
    pub converged: bool,
    /// Final energy of every run, in run order (zero start first).
    pub restart_energies: Vec<f64>,
    pub runs: Vec<RunSummary>,
    pub best_run: usize,
    /// Set when the winning run stopped because no step decreased the energy.
    pub line_search_failed: bool,
    /// Accepted energies of the winning run, starting with its initial value.
    pub energy_trace: Vec<f64>,
}

struct RunOutcome {
    summary: RunSummary,
    field: Vec<f64>,
    trace: Vec<f64>,
}

fn descend(problem: &CellProblem, config: &SolveConfig, pre: &Preconditioner, start: Vec<f64>) -> Result<RunOutcome> {
    let n = problem.n();
    let len = start.len();
    let mut u = start;
    let mut trial = vec![0.0; len];
    let mut grad = vec![0.0; len];
    let mut dir = vec![0.0; len];
    let mut block = vec![0.0; problem.interior.len()];
    let mut scratch = Vec::new();
    let mut buf = EvalBuffers::default();

    let mut energy = problem.energy_impl(&u, Some(&mut grad), &mut buf)?;
    let mut trace = vec![energy];
    let mut alpha_prev = 1.0;
    let mut converged = false;
    let mut failed = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        dir.fill(0.0);
        let mut sup: f64 = 0.0;
        for comp in 0..n {
            for (k, &node) in problem.interior.iter().enumerate() {
                block[k] = grad[node * n + comp];
            }
            pre.solve(&mut block, &mut scratch);
            for (k, &node) in problem.interior.iter().enumerate() {
                dir[node * n + comp] = -block[k];
                sup = sup.max(block[k].abs());
            }
        }
        if sup <= config.gradient_tolerance {
            converged = true;
            break;
        }
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            failed = true;
            break;
        }
        let mut alpha = (alpha_prev / config.shrink).min(1.0);
        let mut accepted = None;
        while alpha > 1e-14 {
            for ((t, x), d) in trial.iter_mut().zip(&u).zip(&dir) {
                *t = x + alpha * d;
            }
            let e = match problem.energy_impl(&trial, None, &mut buf) {
                Ok(e) => e,
                Err(Error::NonFiniteIntegrand { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if e < energy && e <= energy + config.armijo * alpha * slope {
                accepted = Some(e);
                break;
            }
            alpha *= config.shrink;
        }
        iterations += 1;
        match accepted {
            Some(_) => {
                std::mem::swap(&mut u, &mut trial);
                energy = problem.energy_impl(&u, Some(&mut grad), &mut buf)?;
                trace.push(energy);
                alpha_prev = alpha;
            }
            None => {
                // the predicted decrease is below the rounding level of E
                if slope.abs() <= 1e-11 * energy.abs().max(1.0) {
                    converged = true;
                } else {
                    failed = true;
                }
                break;
            }
        }
    }
    Ok(RunOutcome {
        summary: RunSummary { energy, iterations, converged, line_search_failed: failed },
        field: u,
        trace,
    })
}

/// Descent from the zero field, then `config.restarts` seeded random starts.
pub fn minimize(problem: &CellProblem, config: &SolveConfig) -> Result<CellSolution> {
    minimize_with_starts(problem, config, &[])
}

/// Like [`minimize`], with caller-supplied starting fields tried after the
/// zero field and before the random restarts.
pub fn minimize_with_starts(problem: &CellProblem, config: &SolveConfig, starts: &[GridField]) -> Result<CellSolution> {
    config.validate()?;
    for s in starts {
        problem.check_field(s)?;
    }
    let pre = Preconditioner::new(&problem.grid);
    let len = problem.grid.node_count() * problem.n();
    let extra = starts.len();
    let total = 1 + extra + config.restarts;
    let make_start = |run: usize| -> Vec<f64> {
        if run == 0 {
            return vec![0.0; len];
        }
        if run <= extra {
            let mut v = starts[run - 1].values().to_vec();
            mask_boundary(problem, &mut v);
            return v;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(run as u64);
        let mut v = vec![0.0; len];
        let n = problem.n();
        for &node in &problem.interior {
            for i in 0..n {
                v[node * n + i] =
                    if config.init_scale > 0.0 { rng.gen_range(-config.init_scale..=config.init_scale) } else { 0.0 };
            }
        }
        v
    };
    let outcomes: Vec<RunOutcome> = (0..total)
        .into_par_iter()
        .map(|run| descend(problem, config, &pre, make_start(run)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.summary.energy < outcomes[best].summary.energy {
            best = i;
        }
    }
    let restart_energies = outcomes.iter().map(|o| o.summary.energy).collect();
    let runs: Vec<RunSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let win = outcomes.into_iter().nth(best).expect("at least one run");
    Ok(CellSolution {
        energy: win.summary.energy,
        minimizer: GridField::from_values(problem.grid.clone(), problem.n(), win.field)?,
        iterations_used: win.summary.iterations,
        converged: win.summary.converged,
        restart_energies,
        runs,
        best_run: best,
        line_search_failed: win.summary.line_search_failed,
        energy_trace: win.trace,
    })
}

fn mask_boundary(problem: &CellProblem, v: &mut [f64]) {
    let n = problem.n();
    for node in 0..problem.grid.node_count() {
        if problem.grid.is_boundary_node(node) {
            v[node * n..(node + 1) * n].fill(0.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementRow {
    pub per_unit: usize,
    pub energy: f64,
    pub converged: bool,
    /// Energy change from the previous (coarser) resolution.
    pub delta: Option<f64>,
}

/// Minimum cell energy on `(0,t)^m` at each resolution, coarse to fine.
pub fn refinement_deltas(
    lagrangian: Arc<dyn Lagrangian>,
    y: &Matrix,
    t: f64,
    resolutions: &[usize],
    config: &SolveConfig,
) -> Result<Vec<RefinementRow>> {
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("resolutions must be strictly increasing".into()));
    }
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(resolutions.len());
    for &per_unit in resolutions {
        let problem = CellProblem::with_resolution(lagrangian.clone(), y.clone(), t, per_unit)?;
        let sol = minimize(&problem, config)?;
        let delta = rows.last().map(|prev| sol.energy - prev.energy);
        rows.push(RefinementRow { per_unit, energy: sol.energy, converged: sol.converged, delta });
    }
    Ok(rows)
}

/// Worst relative error (2-norm over the sampled coordinates) between the
/// assembled energy gradient and central differences with step `epsilon`,
/// on at most 50 seeded interior coordinates.
pub fn gradient_check(problem: &CellProblem, u: &GridField, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    problem.check_field(u)?;
    let n = problem.n();
    let coords: Vec<usize> = problem.interior.iter().flat_map(|&node| (0..n).map(move |i| node * n + i)).collect();
    if coords.is_empty() {
        return Ok(0.0);
    }
    let g = cell_energy_gradient(problem, u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
    let picks: Vec<usize> =
        if coords.len() <= 50 { coords } else { (0..50).map(|_| coords[rng.gen_range(0..coords.len())]).collect() };
    let mut buf = EvalBuffers::default();
    let mut v = u.values().to_vec();
    let (mut diff, mut norm) = (0.0, 0.0);
    for &k in &picks {
        let orig = v[k];
        v[k] = orig + epsilon;
        let ep = problem.energy_impl(&v, None, &mut buf)?;
        v[k] = orig - epsilon;
        let em = problem.energy_impl(&v, None, &mut buf)?;
        v[k] = orig;
        let fd = (ep - em) / (2.0 * epsilon);
        diff += (fd - g[k]) * (fd - g[k]);
        norm += g[k] * g[k];
    }
    Ok(if norm == 0.0 { diff.sqrt() } else { (diff / norm).sqrt() })
}

#[cfg(test)]
mod tests;
