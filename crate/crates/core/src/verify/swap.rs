use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{CoefficientFamily, FamilyMember, Lagrangian, Oscillation};
use crate::numerics::{Grid, GridField, Matrix, Stencil};
use crate::report::{Clause, VerificationReport};

/// Which symmetry of the quadratic family the demo exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SwapMode {
    /// `a = I`, `b = c I`; source coordinates swapped, compared bitwise.
    Isotropic,
    /// `a = I`, general `b`; source coordinates swapped.
    Bild,
    /// `b = I`, general `a`; target components 1 and 2 swapped.
    Urbild,
}

impl SwapMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "isotropic" => Some(SwapMode::Isotropic),
            "bild" => Some(SwapMode::Bild),
            "urbild" => Some(SwapMode::Urbild),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SwapMode::Isotropic => "isotropic",
            SwapMode::Bild => "bild",
            SwapMode::Urbild => "urbild",
        }
    }
}

const SWAP_TOLERANCE: f64 = 1e-12;
const SAMPLED_FIELDS: usize = 3;

fn check_family(family: &CoefficientFamily, mode: SwapMode) -> Result<()> {
    if family.is_empty() {
        return Err(Error::Construction("coefficient family is empty".into()));
    }
    let a_identity = family.a_n.iter().all(|a| *a == Matrix::identity(a.rows()));
    let b_identity = family.b_n.iter().all(|b| *b == Matrix::identity(b.rows()));
    if family.a_n.iter().any(|a| a.shape() != (2, 2)) {
        return Err(Error::Construction("the swap demo needs two source dimensions".into()));
    }
    let ok = match mode {
        SwapMode::Isotropic => {
            a_identity
                && family.oscillation != Oscillation::Source
                && (0..family.len()).all(|k| family.member(k).form.is_isotropic())
        }
        SwapMode::Bild => a_identity && family.oscillation != Oscillation::Source,
        SwapMode::Urbild => {
            b_identity && family.oscillation != Oscillation::Target && family.b_n.iter().all(|b| b.rows() >= 2)
        }
    };
    if !ok {
        return Err(Error::Construction(format!(
            "coefficient family does not have the structure required by {} mode",
            mode.name()
        )));
    }
    Ok(())
}

/// Midpoint-rule integral of `f(x, P x, P)` over the grid's cube.
pub fn affine_energy(lag: &dyn Lagrangian, p: &Matrix, grid: &Grid) -> f64 {
    let stencil = Stencil::new(grid);
    let mut total = 0.0;
    for cell in 0..stencil.cell_count() {
        let x = stencil.midpoint(cell);
        let s = p.mul_vec(x);
        total += lag.eval(x, &s, p);
    }
    total * grid.cell_volume()
}

/// Cell integrand values of `member` at the field `v`.
fn cell_values(member: &FamilyMember, v: &GridField) -> Vec<f64> {
    let grid = v.grid();
    let stencil = Stencil::new(grid);
    let n = v.components();
    let mut a = Matrix::zeros(n, grid.dim());
    let mut s = vec![0.0; n];
    (0..stencil.cell_count())
        .map(|cell| {
            stencil.cell_gradient(v.values(), n, cell, &mut a);
            stencil.corner_average(v.values(), n, cell, &mut s);
            member.eval(stencil.midpoint(cell), &s, &a)
        })
        .collect()
}

/// Sum over cells pairing `(i, j)` with `(j, i)`, so that a field and its
/// transpose give bitwise equal totals.
fn symmetric_sum(values: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        total += values[i + i * n];
        for j in i + 1..n {
            total += values[i + j * n] + values[j + i * n];
        }
    }
    total
}

fn swapped(v: &GridField, mode: SwapMode) -> GridField {
    let grid = v.grid().clone();
    let n = v.components();
    let mut out = GridField::zeros(grid.clone(), n);
    let mut idx = [0usize; 2];
    for node in 0..grid.node_count() {
        grid.node_multi_index(node, &mut idx);
        match mode {
            SwapMode::Isotropic | SwapMode::Bild => {
                let src = grid.node_index(&[idx[1], idx[0]]);
                for c in 0..n {
                    out.set(node, c, v.get(src, c));
                }
            }
            SwapMode::Urbild => {
                for c in 0..n {
                    let from = match c {
                        0 => 1,
                        1 => 0,
                        _ => c,
                    };
                    out.set(node, c, v.get(node, from));
                }
            }
        }
    }
    out
}

/// Premise: the integrand separates `u1 = P x` from the swapped `u2 = P~ x`
/// by a positive energy gap. Swap invariance: every family member assigns
/// the same discrete energy to a sampled field and its swapped pullback.
///
/// `probe` defaults to `(e1 | e2)` with `N` rows.
pub fn swap_contradiction_demo(
    integrand: &dyn Lagrangian,
    family: &CoefficientFamily,
    grid: &Grid,
    mode: SwapMode,
    probe: Option<&Matrix>,
    seed: u64,
) -> Result<VerificationReport> {
    if integrand.source_dim() != 2 || grid.dim() != 2 {
        return Err(Error::Dimension("the swap demo is two-dimensional in the source".into()));
    }
    check_family(family, mode)?;
    let n = integrand.target_dim();
    let p = match probe {
        Some(p) => p.clone(),
        None => {
            let mut p = Matrix::zeros(n, 2);
            p[(0, 0)] = 1.0;
            p[(1, 1)] = 1.0;
            p
        }
    };
    if p.shape() != (n, 2) {
        return Err(Error::Dimension(format!("probe is {:?}, integrand needs {n} x 2", p.shape())));
    }
    let mut report = VerificationReport::new(format!("swap[{}]", mode.name()));
    let e1 = affine_energy(integrand, &p, grid);
    let e2 = affine_energy(integrand, &p.swap_columns(0, 1), grid);
    report.push(
        Clause::positive("anisotropy gap of the integrand is positive", e1 - e2)
            .with("energy_u1", e1)
            .with("energy_u2", e2),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_n = family.b_n[0].rows();
    let cells = grid.nodes_per_side();
    let mut worst = 0.0f64;
    let mut bitwise = true;
    for k in 0..family.len() {
        let member = family.member(k);
        for _ in 0..SAMPLED_FIELDS {
            let values: Vec<f64> = (0..grid.node_count() * target_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = GridField::from_values(grid.clone(), target_n, values)?;
            let w = swapped(&v, mode);
            let ev = symmetric_sum(&cell_values(&member, &v), cells) * grid.cell_volume();
            let ew = symmetric_sum(&cell_values(&member, &w), cells) * grid.cell_volume();
            worst = worst.max((ev - ew).abs());
            bitwise &= ev.to_bits() == ew.to_bits();
        }
    }
    report.push(
        Clause::new("family energies agree on swapped fields", worst <= SWAP_TOLERANCE, SWAP_TOLERANCE - worst)
            .with("max_difference", worst)
            .with("members", family.len() as f64),
    );
    if mode == SwapMode::Isotropic {
        report.push(Clause::new("isotropic energies agree bitwise", bitwise, if bitwise { 1.0 } else { -1.0 }));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_counterexample_finsler, NonEvenDominance};

    fn grid() -> Grid {
        Grid::new(2, 1.0, 8).unwrap()
    }

    #[test]
    fn isotropic_demo_passes_bitwise() {
        let fam = CoefficientFamily::isotropic(3, 3);
        let r = swap_contradiction_demo(&NonEvenDominance, &fam, &grid(), SwapMode::Isotropic, None, 1).unwrap();
        assert!(r.overall(), "{}", r.to_text());
        assert!((r.clauses[0].margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bild_and_urbild_demos_pass() {
        let r = swap_contradiction_demo(
            &NonEvenDominance,
            &CoefficientFamily::target_metric(3),
            &grid(),
            SwapMode::Bild,
            None,
            2,
        )
        .unwrap();
        assert!(r.overall(), "{}", r.to_text());
        let r = swap_contradiction_demo(
            &NonEvenDominance,
            &CoefficientFamily::source_metric(3),
            &grid(),
            SwapMode::Urbild,
            None,
            3,
        )
        .unwrap();
        assert!(r.overall(), "{}", r.to_text());
    }

    #[test]
    fn finsler_coupling_has_no_column_gap() {
        let fam = CoefficientFamily::isotropic(1, 3);
        let lag = make_counterexample_finsler();
        let r = swap_contradiction_demo(&lag, &fam, &grid(), SwapMode::Isotropic, None, 0).unwrap();
        assert_eq!(r.clauses[0].margin, 0.0);
        assert!(!r.overall());
    }

    #[test]
    fn mode_mismatch_is_structural() {
        let fam = CoefficientFamily::source_metric(2);
        assert!(swap_contradiction_demo(&NonEvenDominance, &fam, &grid(), SwapMode::Bild, None, 0).is_err());
        let fam = CoefficientFamily::target_metric(2);
        assert!(swap_contradiction_demo(&NonEvenDominance, &fam, &grid(), SwapMode::Isotropic, None, 0).is_err());
        assert!(swap_contradiction_demo(&NonEvenDominance, &fam, &grid(), SwapMode::Urbild, None, 0).is_err());
    }

    #[test]
    fn unit_weight_isotropic_energy_is_swap_exact() {
        let mut fam = CoefficientFamily::isotropic(1, 3);
        fam.oscillation = Oscillation::None;
        let g = grid();
        let v = GridField::from_fn(g.clone(), 3, |x| vec![x[0] * x[1], x[0].sin(), x[1] * x[1]]);
        let w = swapped(&v, SwapMode::Isotropic);
        let m = fam.member(0);
        let a = symmetric_sum(&cell_values(&m, &v), 8);
        let b = symmetric_sum(&cell_values(&m, &w), 8);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
