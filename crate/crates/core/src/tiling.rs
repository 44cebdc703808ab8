//! Box partition of `(0,s)^m` comparing the cell problems on `(0,t)^m` and
//! `(0,s)^m`: boxes `B_z = sigma_z + [0,t)^m`, collars
//! `A_z = tau_z + [0,t+2)^m \ B_z` and the remainder `Q`.
//!
//! All set computations use integer unit cells.

use std::sync::Arc;

use serde::Serialize;

use crate::cell::{cell_integrand_values, minimize, minimize_with_starts, CellProblem, SolveConfig};
use crate::error::{Error, Result};
use crate::models::Lagrangian;
use crate::numerics::{gradient_at_cells, Grid, GridField, Matrix};
use crate::report::{Clause, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TilingParams {
    pub t: i64,
    pub s: i64,
    pub m: usize,
    pub y: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tiling {
    pub params: TilingParams,
    pub index_set: Vec<Vec<i64>>,
    pub sigma: Vec<Vec<i64>>,
    pub tau: Vec<Vec<i64>>,
    pub lambda: Vec<Vec<i64>>,
}

fn ipow(b: i64, e: usize) -> i64 {
    (0..e).fold(1, |acc, _| acc * b)
}

pub fn build_tiling(params: TilingParams) -> Result<Tiling> {
    let TilingParams { t, s, m, .. } = params;
    if t < 1 {
        return Err(Error::InvalidParameter(format!("t must be a positive integer, got {t}")));
    }
    if s <= t + 4 {
        return Err(Error::InvalidParameter(format!("need s > t + 4, got t = {t}, s = {s}")));
    }
    if m == 0 || params.y.cols() != m {
        return Err(Error::Dimension(format!("Y has {} columns, m = {m}", params.y.cols())));
    }
    let k = s / (t + 4);
    let count = ipow(k, m) as usize;
    let mut tiling = Tiling { params, index_set: Vec::new(), sigma: Vec::new(), tau: Vec::new(), lambda: Vec::new() };
    for flat in 0..count {
        let mut r = flat as i64;
        let z: Vec<i64> = (0..m)
            .map(|_| {
                let v = r % k;
                r /= k;
                v
            })
            .collect();
        let sigma: Vec<i64> = z.iter().map(|zi| (t + 4) * zi + 2).collect();
        let tau = sigma.iter().map(|v| v - 1).collect();
        let lambda = tiling
            .params
            .y
            .mul_vec(&sigma.iter().map(|&v| v as f64).collect::<Vec<_>>())
            .iter()
            .map(|v| v.ceil() as i64)
            .collect();
        tiling.index_set.push(z);
        tiling.sigma.push(sigma);
        tiling.tau.push(tau);
        tiling.lambda.push(lambda);
    }
    Ok(tiling)
}

impl Tiling {
    pub fn len(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// `floor(s / (t + 4))^m`.
    pub fn expected_count(&self) -> i64 {
        ipow(self.params.s / (self.params.t + 4), self.params.m)
    }

    /// `s^m - (t+2)^m floor(s/(t+4))^m`.
    pub fn q_measure(&self) -> i64 {
        let TilingParams { t, s, m, .. } = self.params;
        ipow(s, m) - ipow(t + 2, m) * ipow(s / (t + 4), m)
    }

    /// `lambda_z - Y sigma_z`, the constant added on `B_z`.
    pub fn offset(&self, k: usize) -> Vec<f64> {
        let sig: Vec<f64> = self.sigma[k].iter().map(|&v| v as f64).collect();
        let ys = self.params.y.mul_vec(&sig);
        self.lambda[k].iter().zip(ys).map(|(&l, v)| l as f64 - v).collect()
    }

    pub fn dump(&self) -> String {
        let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = format!("tiling t={} s={} m={}\n", self.params.t, self.params.s, self.params.m);
        out.push_str(&format!("index_count {}\n", self.len()));
        out.push_str(&format!("q_measure {}\n", self.q_measure()));
        for k in 0..self.len() {
            out.push_str(&format!(
                "z={} sigma={} tau={} lambda={}\n",
                join(&self.index_set[k]),
                join(&self.sigma[k]),
                join(&self.tau[k]),
                join(&self.lambda[k])
            ));
        }
        out
    }
}

fn inf_dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// Exact checks of the partition. The only floating-point clause is the
/// membership `lambda_z - Y sigma_z in [0,1)^N`.
pub fn verify_tiling(tiling: &Tiling) -> VerificationReport {
    let TilingParams { t, s, m, .. } = tiling.params;
    let mut report = VerificationReport::new("tiling");
    let count = tiling.len() as i64;
    let expected = tiling.expected_count();
    report.push(
        Clause::new("|I_s| = floor(s/(t+4))^m", count == expected, -((count - expected).abs() as f64))
            .with("count", count as f64)
            .with("expected", expected as f64),
    );

    let mut cell_ok = 0i64;
    let mut shift_ok = 0i64;
    let mut bounds_ok = 0i64;
    let mut lambda_ok = 0i64;
    for k in 0..tiling.len() {
        let (z, sig, tau) = (&tiling.index_set[k], &tiling.sigma[k], &tiling.tau[k]);
        let in_cell = z.iter().zip(sig).all(|(zi, si)| {
            let base = (t + 4) * zi;
            *si > base + 1 && *si <= base + 2
        });
        cell_ok += (!in_cell) as i64;
        shift_ok += (!sig.iter().zip(tau).all(|(a, b)| b + 1 == *a)) as i64;
        let bounds = sig.iter().all(|&v| v > 1 && v <= s - t - 2) && tau.iter().all(|&v| v > 0 && v <= s - t - 3);
        bounds_ok += (!bounds) as i64;
        let lam = tiling.offset(k).iter().all(|&c| (0.0..1.0).contains(&c));
        lambda_ok += (!lam) as i64;
    }
    report.push(Clause::new("sigma_z in (t+4)z + (1,2]^m", cell_ok == 0, -(cell_ok as f64)));
    report.push(Clause::new("tau_z = sigma_z - 1", shift_ok == 0, -(shift_ok as f64)));
    report.push(Clause::new("1 < sigma_i <= s-t-2 and 0 < tau_i <= s-t-3", bounds_ok == 0, -(bounds_ok as f64)));
    report.push(Clause::new("lambda_z - Y sigma_z in [0,1)^N", lambda_ok == 0, -(lambda_ok as f64)));

    let mut worst_sep = i64::MAX;
    for a in 0..tiling.len() {
        for b in (a + 1)..tiling.len() {
            let ss = inf_dist(&tiling.sigma[a], &tiling.sigma[b]) - (t + 3);
            let tt = inf_dist(&tiling.tau[a], &tiling.tau[b]) - (t + 3);
            let st = inf_dist(&tiling.sigma[a], &tiling.tau[b]) - (t + 2);
            let ts = inf_dist(&tiling.tau[a], &tiling.sigma[b]) - (t + 2);
            worst_sep = worst_sep.min(ss.min(tt).min(st).min(ts));
        }
    }
    if tiling.len() > 1 {
        report.push(Clause::new("pairwise separation of sigma and tau", worst_sep >= 0, worst_sep as f64));
    }

    // exhaustive enumeration of the unit cells of [0,s)^m
    let cells = ipow(s, m) as usize;
    let mut cover = vec![0u32; cells];
    let mut outside = 0i64;
    let mut b_outside = 0i64;
    for k in 0..tiling.len() {
        let tau = &tiling.tau[k];
        let sig = &tiling.sigma[k];
        if tau.iter().any(|&v| v < 1 || v + t + 2 > s) {
            outside += 1;
        }
        if sig.iter().zip(tau).any(|(&a, &b)| a < b || a + t > b + t + 2) {
            b_outside += 1;
        }
        let side = (t + 2) as usize;
        for flat in 0..side.pow(m as u32) {
            let mut r = flat;
            let mut idx = 0usize;
            let mut stride = 1usize;
            let mut inside = true;
            for &ta in tau.iter() {
                let c = ta + (r % side) as i64;
                r /= side;
                if c < 0 || c >= s {
                    inside = false;
                    break;
                }
                idx += c as usize * stride;
                stride *= s as usize;
            }
            if inside {
                cover[idx] += 1;
            }
        }
    }
    let overlaps = cover.iter().filter(|&&c| c > 1).count() as i64;
    let uncovered = cover.iter().filter(|&&c| c == 0).count() as i64;
    report.push(Clause::new("tau_z + [0,t+2)^m pairwise disjoint", overlaps == 0, -(overlaps as f64)));
    report.push(Clause::new("tau_z + [0,t+2)^m inside (0,s)^m", outside == 0, -(outside as f64)));
    report.push(Clause::new("B_z inside tau_z + [0,t+2)^m", b_outside == 0, -(b_outside as f64)));
    let q = tiling.q_measure();
    report.push(
        Clause::new("|Q| = s^m - (t+2)^m floor(s/(t+4))^m", uncovered == q, -((uncovered - q).abs() as f64))
            .with("enumerated", uncovered as f64)
            .with("formula", q as f64),
    );
    report
}

/// Where a unit-cell-aligned point or cell lies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Box(usize),
    Collar(usize),
    Remainder,
}

fn intervals_per_unit(grid: &Grid) -> Result<usize> {
    let side = grid.side_length().round();
    if (grid.side_length() - side).abs() > 1e-12 || side < 1.0 {
        return Err(Error::Dimension(format!("grid side {} is not an integer", grid.side_length())));
    }
    let side = side as usize;
    if !grid.nodes_per_side().is_multiple_of(side) {
        return Err(Error::Dimension(format!("{} intervals do not divide side {side} evenly", grid.nodes_per_side())));
    }
    Ok(grid.nodes_per_side() / side)
}

/// Classifies the cell with integer multi-index `cell` on a grid with
/// `npu` intervals per unit: `i` lies in `[a, b)` iff `a npu <= i < b npu`.
pub fn classify_cell(tiling: &Tiling, npu: usize, cell: &[usize]) -> Region {
    let t = tiling.params.t;
    let inside = |lo: &[i64], width: i64| {
        cell.iter().zip(lo).all(|(&i, &a)| {
            let i = i as i64;
            a * npu as i64 <= i && i < (a + width) * npu as i64
        })
    };
    for k in 0..tiling.len() {
        if inside(&tiling.tau[k], t + 2) {
            return if inside(&tiling.sigma[k], t) { Region::Box(k) } else { Region::Collar(k) };
        }
    }
    Region::Remainder
}

/// The comparison field on `(0,s)^m`: `u_t(x - sigma_z) + lambda_z - Y sigma_z`
/// on `B_z`, zero on `Q`, and the multilinear ramp
/// `(lambda_z - Y sigma_z) prod_a w_a(x_a)` across each collar.
pub fn patch_field(u_t: &GridField, tiling: &Tiling, y: &Matrix, grid_s: &Grid) -> Result<GridField> {
    let TilingParams { t, s, m, .. } = tiling.params;
    let n = y.rows();
    if y != &tiling.params.y {
        return Err(Error::InvalidParameter("Y differs from the tiling's Y".into()));
    }
    if u_t.components() != n || u_t.grid().dim() != m || grid_s.dim() != m {
        return Err(Error::Dimension("field, tiling and grid dimensions disagree".into()));
    }
    let npu = intervals_per_unit(grid_s)?;
    if intervals_per_unit(u_t.grid())? != npu
        || grid_s.nodes_per_side() != npu * s as usize
        || u_t.grid().nodes_per_side() != npu * t as usize
    {
        return Err(Error::Dimension("u_t and the (0,s)^m grid do not share node spacing".into()));
    }
    if !u_t.boundary_is_zero() {
        return Err(Error::InvalidParameter("u_t must vanish on the boundary".into()));
    }
    let p = npu as i64;
    let offsets: Vec<Vec<f64>> = (0..tiling.len()).map(|k| tiling.offset(k)).collect();
    let mut out = GridField::zeros(grid_s.clone(), n);
    let mut idx = vec![0usize; m];
    let mut local = vec![0usize; m];
    for node in 0..grid_s.node_count() {
        grid_s.node_multi_index(node, &mut idx);
        for k in 0..tiling.len() {
            let (tau, sig) = (&tiling.tau[k], &tiling.sigma[k]);
            let in_outer = idx.iter().zip(tau).all(|(&i, &a)| {
                let i = i as i64;
                a * p <= i && i <= (a + t + 2) * p
            });
            if !in_outer {
                continue;
            }
            let in_box = idx.iter().zip(sig).all(|(&i, &a)| {
                let i = i as i64;
                a * p <= i && i <= (a + t) * p
            });
            if in_box {
                for a in 0..m {
                    local[a] = (idx[a] as i64 - sig[a] * p) as usize;
                }
                let src = u_t.grid().node_index(&local);
                for i in 0..n {
                    out.set(node, i, u_t.get(src, i) + offsets[k][i]);
                }
            } else {
                let mut w = 1.0;
                for a in 0..m {
                    let i = idx[a] as i64;
                    if i < sig[a] * p {
                        w *= (i - tau[a] * p) as f64 / p as f64;
                    } else if i > (sig[a] + t) * p {
                        w *= ((tau[a] + t + 2) * p - i) as f64 / p as f64;
                    }
                }
                for i in 0..n {
                    out.set(node, i, offsets[k][i] * w);
                }
            }
            break;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SubadditivityParts {
    pub g_t: f64,
    pub g_s: f64,
    pub e_s: f64,
    pub bound: f64,
    pub box_energy: f64,
    pub collar_energy: f64,
    pub remainder_energy: f64,
    pub collar_gradient_sup: f64,
}

/// Solves for `g_t`, patches the minimizer into `(0,s)^m`, evaluates its
/// energy `E_s`, solves for `g_s` (with the patched field as an extra
/// start) and checks `g_s <= E_s <= bound`, where the bound uses the
/// measured collar energy in place of the growth estimate.
pub fn verify_subadditivity(
    lag: Arc<dyn Lagrangian>,
    y: &Matrix,
    t: i64,
    s: i64,
    config: &SolveConfig,
    per_unit: usize,
) -> Result<(VerificationReport, SubadditivityParts)> {
    let m = lag.source_dim();
    let tiling = build_tiling(TilingParams { t, s, m, y: y.clone() })?;
    let prob_t = CellProblem::with_resolution(lag.clone(), y.clone(), t as f64, per_unit)?;
    let sol_t = minimize(&prob_t, config)?;
    let grid_s = Grid::per_unit(m, s as f64, per_unit)?;
    let u_s = patch_field(&sol_t.minimizer, &tiling, y, &grid_s)?;
    let prob_s = CellProblem::new(lag.clone(), y.clone(), s as f64, grid_s.clone())?;
    let values = cell_integrand_values(&prob_s, &u_s)?;
    let cells = values.len() as f64;
    let e_s = values.iter().sum::<f64>() / cells;
    let grads = gradient_at_cells(&u_s, y.rows())?;
    let (mut boxes, mut collar, mut rest, mut sup) = (0.0, 0.0, 0.0, 0.0f64);
    let mut idx = vec![0usize; m];
    for (c, v) in values.iter().enumerate() {
        grid_s.cell_multi_index(c, &mut idx);
        match classify_cell(&tiling, per_unit, &idx) {
            Region::Box(_) => boxes += v,
            Region::Collar(_) => {
                collar += v;
                sup = sup.max((&grads[c] + y).norm());
            }
            Region::Remainder => rest += v,
        }
    }
    let sol_s = minimize_with_starts(&prob_s, config, &[u_s])?;
    let g = lag.growth();
    let (tf, sf) = (t as f64, s as f64);
    let q_factor = 1.0 - ((tf + 2.0) / (tf + 4.0) - (tf + 2.0) / sf).powi(m as i32);
    let bound = q_factor * g.c2 * (1.0 + y.norm().powf(g.p))
        + collar / cells
        + (tf / (tf + 4.0)).powi(m as i32) * (sol_t.energy + 1.0 / tf);
    let parts = SubadditivityParts {
        g_t: sol_t.energy,
        g_s: sol_s.energy,
        e_s,
        bound,
        box_energy: boxes / cells,
        collar_energy: collar / cells,
        remainder_energy: rest / cells,
        collar_gradient_sup: sup,
    };
    let mut report = VerificationReport::new("subadditivity");
    report.push(
        Clause::new("g_s <= E_s", parts.g_s <= parts.e_s, parts.e_s - parts.g_s)
            .with("g_s", parts.g_s)
            .with("E_s", parts.e_s),
    );
    report.push(
        Clause::new("E_s <= bound", parts.e_s <= parts.bound, parts.bound - parts.e_s)
            .with("E_s", parts.e_s)
            .with("bound", parts.bound)
            .with("g_t", parts.g_t)
            .with("collar_energy", parts.collar_energy)
            .with("collar_gradient_sup", parts.collar_gradient_sup),
    );
    if !(sol_t.converged && sol_s.converged) {
        report.note("a cell solve hit the iteration budget");
    }
    if sol_t.line_search_failed || sol_s.line_search_failed {
        report.note("line search failed in a cell solve");
    }
    Ok((report, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::cell_energy;
    use crate::models::{Dirichlet, Layered1d};

    fn params(t: i64, s: i64, m: usize, y: &str) -> TilingParams {
        let y: Matrix = y.parse().unwrap();
        TilingParams { t, s, m, y }
    }

    #[test]
    fn one_dimensional_minimal_case() {
        let tl = build_tiling(params(1, 6, 1, "0.5")).unwrap();
        assert_eq!(tl.index_set, vec![vec![0]]);
        assert_eq!(tl.sigma, vec![vec![2]]);
        assert_eq!(tl.tau, vec![vec![1]]);
        assert_eq!(tl.lambda, vec![vec![1]]);
        assert_eq!(tl.q_measure(), 6 - 3);
        assert!(verify_tiling(&tl).overall());
        let npu = 2;
        let regions: Vec<Region> = (0..6 * npu).map(|i| classify_cell(&tl, npu, &[i])).collect();
        let expected: Vec<Region> = (0..6 * npu)
            .map(|i| match i {
                4 | 5 => Region::Box(0),
                2 | 3 | 6 | 7 => Region::Collar(0),
                _ => Region::Remainder,
            })
            .collect();
        assert_eq!(regions, expected);
    }

    #[test]
    fn two_dimensional_layout() {
        let tl = build_tiling(params(2, 13, 2, "0.5,0.25")).unwrap();
        assert_eq!(tl.len(), 4);
        assert_eq!(tl.q_measure(), 105);
        let r = verify_tiling(&tl);
        assert!(r.overall(), "{}", r.to_text());
    }

    #[test]
    fn shifted_sigma_is_caught() {
        let mut tl = build_tiling(params(2, 13, 2, "0.5,0.25")).unwrap();
        tl.sigma[1][0] += 3;
        let r = verify_tiling(&tl);
        assert!(!r.overall());
        assert!(!r.clause("sigma_z in").unwrap().passed);
    }

    #[test]
    fn overlapping_boxes_are_caught() {
        let mut tl = build_tiling(params(1, 12, 1, "0")).unwrap();
        tl.tau[1][0] = 3;
        tl.sigma[1][0] = 4;
        let r = verify_tiling(&tl);
        assert!(!r.clause("disjoint").unwrap().passed);
    }

    #[test]
    fn small_s_is_rejected() {
        assert!(build_tiling(params(2, 6, 1, "1")).is_err());
    }

    #[test]
    fn patch_of_zero_with_zero_slope_vanishes() {
        let tl = build_tiling(params(2, 13, 2, "0,0")).unwrap();
        let u_t = GridField::zeros(Grid::per_unit(2, 2.0, 2).unwrap(), 1);
        let out = patch_field(&u_t, &tl, &tl.params.y, &Grid::per_unit(2, 13.0, 2).unwrap()).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integer_slopes_need_no_offset() {
        let tl = build_tiling(params(2, 13, 2, "1,2")).unwrap();
        let u_t = GridField::zeros(Grid::per_unit(2, 2.0, 2).unwrap(), 1);
        let out = patch_field(&u_t, &tl, &tl.params.y, &Grid::per_unit(2, 13.0, 2).unwrap()).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_dimensional_patch_by_hand() {
        let tl = build_tiling(params(1, 6, 1, "0.5")).unwrap();
        let npu = 2;
        let u_t = GridField::from_values(Grid::per_unit(1, 1.0, npu).unwrap(), 1, vec![0.0, 0.3, 0.0]).unwrap();
        let grid_s = Grid::per_unit(1, 6.0, npu).unwrap();
        let out = patch_field(&u_t, &tl, &tl.params.y, &grid_s).unwrap();
        // sigma = 2, lambda = ceil(1) = 1, offset = 0
        let mut hat_only = [0.0; 13];
        hat_only[5] = 0.3;
        assert_eq!(out.values(), &hat_only);
        let tl = build_tiling(params(1, 6, 1, "0.3")).unwrap();
        let out = patch_field(&u_t, &tl, &tl.params.y, &grid_s).unwrap();
        let c = 1.0 - 0.6;
        let want = [0.0, 0.0, 0.0, c / 2.0, c, 0.3 + c, c, c / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in out.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(out.values()[5], 0.3 + tl.offset(0)[0]);
        let p = CellProblem::new(Arc::new(Layered1d::new()), tl.params.y.clone(), 6.0, grid_s).unwrap();
        assert!(cell_energy(&p, &out).unwrap().is_finite());
    }

    #[test]
    fn misaligned_grids_are_rejected() {
        let tl = build_tiling(params(1, 6, 1, "0.5")).unwrap();
        let u_t = GridField::zeros(Grid::per_unit(1, 1.0, 2).unwrap(), 1);
        assert!(patch_field(&u_t, &tl, &tl.params.y, &Grid::per_unit(1, 6.0, 3).unwrap()).is_err());
    }

    #[test]
    fn dirichlet_chain_is_tight_at_the_ends() {
        let y: Matrix = "0.7,-0.2".parse().unwrap();
        let (r, parts) =
            verify_subadditivity(Arc::new(Dirichlet::new(1, 2)), &y, 1, 6, &SolveConfig::default(), 2).unwrap();
        assert!(r.overall(), "{}", r.to_text());
        assert!((parts.g_s - y.norm_sq()).abs() < 1e-10);
        assert!((parts.g_t - y.norm_sq()).abs() < 1e-10);
        assert!(parts.e_s >= parts.g_s);
    }
}
