use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::models::{CartanIntegrand, Dominance};
use crate::numerics::{wedge, Matrix};
use crate::report::{Clause, VerificationReport};

/// Threshold below which a least-squares residual counts as a solution.
/// `(coef, a-name, b-name)` terms and the target of one constraint.
pub type ConstraintSpec<'a> = (Vec<(f64, &'a str, &'a str)>, f64);

pub const FEASIBLE_RESIDUAL: f64 = 1e-8;

const STARTS: usize = 64;
/// Tight bounds are attained by the least-squares optimum up to rounding.
const ROUNDING_SLACK: f64 = 1e-9;
const START_RANGE: f64 = 2.0;
const MAX_LM_ITERATIONS: usize = 400;

/// `coef * a_k * b_l`, indices into the system's unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub a: usize,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductConstraint {
    pub terms: Vec<Monomial>,
    pub target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Expectation {
    /// Every point has residual norm at least `margin`.
    Infeasible {
        margin: f64,
    },
    Feasible,
}

#[derive(Clone, Debug, PartialEq)]
enum Chain {
    None,
    /// Two-sided ratio bound on `b22 / b11`.
    FinslerRatio,
    /// Linear dependency among the coefficient rows.
    Dependency {
        weights: Vec<f64>,
        parity: Option<f64>,
    },
}

/// Equations `sum coef * a * b = target` in unknowns split into an `a` group
/// and a `b` group.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductConstraintSystem {
    pub name: String,
    pub unknowns: Vec<String>,
    pub constraints: Vec<ProductConstraint>,
    pub expectation: Expectation,
    chain: Chain,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    name: String,
    #[serde(default)]
    unknowns: Vec<String>,
    margin: Option<f64>,
    constraint: Vec<ConstraintFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    terms: Vec<(f64, String, String)>,
    target: f64,
}

fn is_a(name: &str) -> bool {
    name.starts_with('a')
}

fn is_b(name: &str) -> bool {
    name.starts_with('b')
}

impl ProductConstraintSystem {
    /// Builds a system from `(coef, a-name, b-name)` terms. Unknown names must
    /// start with `a` or `b` according to their group.
    pub fn new(name: impl Into<String>, constraints: &[ConstraintSpec], expectation: Expectation) -> Result<Self> {
        let mut sys = ProductConstraintSystem {
            name: name.into(),
            unknowns: Vec::new(),
            constraints: Vec::new(),
            expectation,
            chain: Chain::None,
        };
        for (terms, target) in constraints {
            let mut c = ProductConstraint { terms: Vec::new(), target: *target };
            for &(coef, a, b) in terms {
                if !is_a(a) || !is_b(b) {
                    return Err(Error::Construction(format!(
                        "term {coef}*{a}*{b} is not an a-factor times a b-factor"
                    )));
                }
                let a = sys.unknown(a);
                let b = sys.unknown(b);
                c.terms.push(Monomial { coef, a, b });
            }
            if c.terms.is_empty() {
                return Err(Error::Construction("constraint without terms".into()));
            }
            sys.constraints.push(c);
        }
        if sys.constraints.is_empty() {
            return Err(Error::Construction("system without constraints".into()));
        }
        if let Expectation::Infeasible { margin } = expectation {
            if !(margin > 0.0) {
                return Err(Error::InvalidParameter(format!("margin must be positive, got {margin}")));
            }
        }
        Ok(sys)
    }

    fn unknown(&mut self, name: &str) -> usize {
        match self.unknowns.iter().position(|u| u == name) {
            Some(i) => i,
            None => {
                self.unknowns.push(name.to_string());
                self.unknowns.len() - 1
            }
        }
    }

    /// Reads a system from TOML:
    ///
    /// ```toml
    /// name = "mine"
    /// margin = 0.1            # omit for a system expected to be feasible
    /// [[constraint]]
    /// terms = [[1.0, "a11", "b11"]]
    /// target = 1.0
    /// ```
    ///
    /// Returns the system and warnings about listed unknowns that no
    /// constraint references.
    pub fn from_toml_str(text: &str) -> Result<(Self, Vec<String>)> {
        let file: SystemFile = toml::from_str(text).map_err(|e| Error::Parse(format!("constraint system: {e}")))?;
        let constraints: Vec<ConstraintSpec> = file
            .constraint
            .iter()
            .map(|c| (c.terms.iter().map(|(k, a, b)| (*k, a.as_str(), b.as_str())).collect(), c.target))
            .collect();
        let expectation = match file.margin {
            Some(margin) => Expectation::Infeasible { margin },
            None => Expectation::Feasible,
        };
        let sys = Self::new(file.name, &constraints, expectation)?;
        let warnings = file
            .unknowns
            .iter()
            .filter(|u| !sys.unknowns.contains(u))
            .map(|u| format!("unknown '{u}' is not referenced by any constraint"))
            .collect();
        Ok((sys, warnings))
    }

    /// `a11 b11 = a11 b22 = a22 b11 = a22 b22 = 1`, `(a12 + a21) b11 = 0`,
    /// `(a12 + a21) b22 = 1`.
    pub fn finsler_asym() -> Self {
        let mut sys = Self::new(
            "finsler-asym",
            &[
                (vec![(1.0, "a11", "b11")], 1.0),
                (vec![(1.0, "a11", "b22")], 1.0),
                (vec![(1.0, "a22", "b11")], 1.0),
                (vec![(1.0, "a22", "b22")], 1.0),
                (vec![(1.0, "a12", "b11"), (1.0, "a21", "b11")], 0.0),
                (vec![(1.0, "a12", "b22"), (1.0, "a21", "b22")], 1.0),
            ],
            Expectation::Infeasible { margin: 0.1 },
        )
        .unwrap();
        sys.chain = Chain::FinslerRatio;
        sys
    }

    /// `a11 b11 = 1`, `a11 b22 = 2`.
    pub fn feasible_control() -> Self {
        Self::new(
            "feasible-control",
            &[(vec![(1.0, "a11", "b11")], 1.0), (vec![(1.0, "a11", "b22")], 2.0)],
            Expectation::Feasible,
        )
        .unwrap()
    }

    /// Constraints `Q(G) = target` for constant probe gradients `G` (3 x 2),
    /// with `Q(G) = a^{ab} b_ij G^i_a G^j_b` expanded into monomials.
    fn from_probes(name: &str, probes: &[(Matrix, f64)], expectation: Expectation) -> Result<Self> {
        let mut constraints = Vec::new();
        let mut names = Vec::new();
        for (g, target) in probes {
            let mut terms: Vec<(f64, String, String)> = Vec::new();
            for al in 0..2 {
                for be in 0..2 {
                    for i in 0..3 {
                        for j in 0..3 {
                            let c = g[(i, al)] * g[(j, be)];
                            if c == 0.0 {
                                continue;
                            }
                            let an = format!("a{}{}", al + 1, be + 1);
                            let bn = format!("b{}{}", i + 1, j + 1);
                            match terms.iter_mut().find(|(_, a, b)| *a == an && *b == bn) {
                                Some(t) => t.0 += c,
                                None => terms.push((c, an, bn)),
                            }
                        }
                    }
                }
            }
            names.push((terms, *target));
        }
        for (terms, target) in &names {
            constraints.push((terms.iter().map(|(c, a, b)| (*c, a.as_str(), b.as_str())).collect(), *target));
        }
        Self::new(name, &constraints, expectation)
    }

    /// Probe system for a Cartan integrand `phi`: zero energy on fields with
    /// a single nonzero derivative column pattern, and the values
    /// `phi(e1)`, `phi(-e1)` on the two orientations of `(0, x1, x2)`. The
    /// parameter `big_m` enters through the probe
    /// `(0, (M+2) x1 + x2, (M+1) x1 + x2)`, whose row is
    /// `(M+2)` times the `phi(e1)` row plus `(M+1)` times the `phi(-e1)` row
    /// modulo the zero rows.
    pub fn cartan(phi: &dyn CartanIntegrand, big_m: f64) -> Result<Self> {
        if !(big_m >= 0.0) || !big_m.is_finite() {
            return Err(Error::InvalidParameter(format!("M must be >= 0, got {big_m}")));
        }
        let (p, q) = (big_m + 2.0, big_m + 1.0);
        // rows of G for target components 2 and 3; component 1 is zero
        let rows: [[f64; 4]; 11] = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 0.0],
            [p, 1.0, 0.0, 0.0],
            [0.0, 0.0, q, 1.0],
            [p, 1.0, q, 1.0],
        ];
        let zero = [0.0; 3];
        let mut probes = Vec::new();
        for r in rows {
            let g = Matrix::from_rows(&[&[0.0, 0.0], &[r[0], r[1]], &[r[2], r[3]]]).unwrap();
            let target = phi.phi(zero, wedge(g.column3(0), g.column3(1)));
            probes.push((g, target));
        }
        let parity = phi.phi(zero, [1.0, 0.0, 0.0]) + phi.phi(zero, [-1.0, 0.0, 0.0]);
        // row 11 = rows 9 + 10 + pq (row 5 - rows 1, 2) + (row 6 - rows 3, 4)
        //          + p (row 7 - rows 1, 4) + q (row 8 - rows 2, 3)
        let pq = p * q;
        let weights = vec![pq + p, pq + q, 1.0 + q, 1.0 + p, -pq, -1.0, -p, -q, -1.0, -1.0, 1.0];
        let defect: f64 = weights.iter().zip(&probes).map(|(w, (_, t))| w * t).sum();
        let margin = defect.abs() / norm(&weights);
        let expectation = if margin > 0.0 { Expectation::Infeasible { margin } } else { Expectation::Feasible };
        let mut sys = Self::from_probes(&format!("cartan[{}]", phi.name()), &probes, expectation)?;
        sys.chain = Chain::Dependency { weights, parity: Some(parity) };
        Ok(sys)
    }

    /// Seven probes of a dominance function: `(x1, x2, x2)` and the six
    /// fields whose signed sum has the same coefficient row.
    pub fn dominance(g: &Dominance) -> Result<Self> {
        let cols = [
            ([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
            ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            ([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            ([0.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
            ([0.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            ([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        ];
        let probes: Vec<(Matrix, f64)> = cols
            .iter()
            .map(|(c1, c2)| {
                let m = Matrix::from_columns(&[c1, c2]).unwrap();
                let v = g.value(&m);
                (m, v)
            })
            .collect();
        let weights = vec![1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0];
        let defect: f64 = weights.iter().zip(&probes).map(|(w, (_, t))| w * t).sum();
        let margin = defect.abs() / norm(&weights);
        let expectation = if margin > 0.0 { Expectation::Infeasible { margin } } else { Expectation::Feasible };
        let mut sys = Self::from_probes(&format!("dominance[{}]", g.cutoff.name()), &probes, expectation)?;
        sys.chain = Chain::Dependency { weights, parity: None };
        Ok(sys)
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.terms.iter().map(|t| t.coef * x[t.a] * x[t.b]).sum::<f64>() - c.target)
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.constraints.len(), self.unknowns.len());
        for (k, c) in self.constraints.iter().enumerate() {
            for t in &c.terms {
                j[(k, t.a)] += t.coef * x[t.b];
                j[(k, t.b)] += t.coef * x[t.a];
            }
        }
        j
    }

    /// Coefficient matrix over the distinct products `a_k b_l`, treating each
    /// product as an independent variable.
    fn product_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut products: Vec<(usize, usize)> = Vec::new();
        for c in &self.constraints {
            for t in &c.terms {
                if !products.contains(&(t.a, t.b)) {
                    products.push((t.a, t.b));
                }
            }
        }
        let mut m = DMatrix::zeros(self.constraints.len(), products.len());
        for (k, c) in self.constraints.iter().enumerate() {
            for t in &c.terms {
                let col = products.iter().position(|p| *p == (t.a, t.b)).unwrap();
                m[(k, col)] += t.coef;
            }
        }
        let rhs = DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.target));
        (m, rhs)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Best point of a seeded Levenberg-Marquardt multistart.
#[derive(Clone, Debug)]
pub struct LeastSquaresFit {
    pub residual_norm: f64,
    pub point: Vec<f64>,
    pub starts: usize,
}

fn levenberg_marquardt(sys: &ProductConstraintSystem, mut x: Vec<f64>) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut r = sys.residuals(&x);
    let mut cost = norm(&r);
    let mut mu = 1e-3;
    for _ in 0..MAX_LM_ITERATIONS {
        if cost < 1e-15 {
            break;
        }
        let j = sys.jacobian(&x);
        let jt = j.transpose();
        let grad = &jt * DVector::from_column_slice(&r);
        if grad.amax() < 1e-15 {
            break;
        }
        let jtj = &jt * &j;
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += mu * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = lhs.lu().solve(&(-&grad)) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let tr = sys.residuals(&trial);
            let tc = norm(&tr);
            if tc.is_finite() && tc < cost {
                x = trial;
                r = tr;
                cost = tc;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (cost, x)
}

/// Least-squares minimum of the residual norm over `starts` seeded starting
/// points, uniform in `[-2, 2]` per unknown.
pub fn least_squares_multistart(sys: &ProductConstraintSystem, starts: usize, seed: u64) -> LeastSquaresFit {
    let n = sys.unknowns.len();
    let runs: Vec<(f64, Vec<f64>)> = (0..starts.max(1))
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-START_RANGE..START_RANGE)).collect();
            levenberg_marquardt(sys, x0)
        })
        .collect();
    let mut best = 0;
    for (k, run) in runs.iter().enumerate() {
        if run.0 < runs[best].0 {
            best = k;
        }
    }
    let (residual_norm, point) = runs[best].clone();
    LeastSquaresFit { residual_norm, point, starts: runs.len() }
}

/// Residual floor from a 64-start least-squares search, plus the built-in
/// certificate for the named systems.
pub fn product_system_infeasibility(sys: &ProductConstraintSystem) -> VerificationReport {
    product_system_infeasibility_seeded(sys, 0)
}

pub fn product_system_infeasibility_seeded(sys: &ProductConstraintSystem, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::new(format!("products[{}]", sys.name));
    let fit = least_squares_multistart(sys, STARTS, seed);
    let res = sys.residuals(&fit.point);
    let max_abs = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    match sys.expectation {
        Expectation::Infeasible { margin } => {
            report.push(
                Clause::new(
                    "best least-squares residual >= declared margin",
                    fit.residual_norm >= margin - ROUNDING_SLACK * margin.max(1.0),
                    fit.residual_norm - margin,
                )
                .with("residual", fit.residual_norm)
                .with("margin", margin)
                .with("max_abs_residual", max_abs)
                .with("starts", fit.starts as f64),
            );
        }
        Expectation::Feasible => {
            report.push(
                Clause::new(
                    "least-squares residual below the feasibility threshold",
                    fit.residual_norm < FEASIBLE_RESIDUAL,
                    FEASIBLE_RESIDUAL - fit.residual_norm,
                )
                .with("residual", fit.residual_norm)
                .with("starts", fit.starts as f64),
            );
        }
    }
    match &sys.chain {
        Chain::None => {}
        Chain::FinslerRatio => finsler_chain(sys, &fit, &res, &mut report),
        Chain::Dependency { weights, parity } => dependency_chain(sys, weights, *parity, &fit, &mut report),
    }
    report
}

/// With every residual at most `delta`, the first two constraints give
/// `|b22/b11| <= (1+delta)/(1-delta)` and the last two give
/// `|b22/b11| >= (1-delta)/delta`. The bounds cross for `delta < 1/3`.
fn finsler_chain(sys: &ProductConstraintSystem, fit: &LeastSquaresFit, res: &[f64], report: &mut VerificationReport) {
    let delta = 0.25;
    let upper = (1.0 + delta) / (1.0 - delta);
    let lower = (1.0 - delta) / delta;
    report.push(
        Clause::positive("ratio bounds at delta = 1/4 are contradictory", lower - upper)
            .with("lower", lower)
            .with("upper", upper),
    );
    let threshold = 1.0 / 3.0;
    let max_abs = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    report.push(
        Clause::new("best point has max residual >= 1/3", max_abs >= threshold - ROUNDING_SLACK, max_abs - threshold)
            .with("max_abs_residual", max_abs),
    );
    let idx = |name: &str| sys.unknowns.iter().position(|u| u == name).unwrap();
    let (b11, b22) = (fit.point[idx("b11")], fit.point[idx("b22")]);
    report.note(format!("best point: b11={b11:e} b22={b22:e} ratio={:e}", (b22 / b11).abs()));
}

/// `w^T C = 0` on the product rows, so `|w^T r| = |w^T t|` for every point
/// and `|r| >= |w^T t| / |w|`. Also reports the distance of the targets from
/// the column space of the relaxed linear system, which bounds `|r|` from
/// below as well.
fn dependency_chain(
    sys: &ProductConstraintSystem,
    weights: &[f64],
    parity: Option<f64>,
    fit: &LeastSquaresFit,
    report: &mut VerificationReport,
) {
    let (c, t) = sys.product_rows();
    let w = DVector::from_column_slice(weights);
    let annihilated = (w.transpose() * &c).amax();
    report.push(
        Clause::new("weights annihilate the product rows", annihilated <= 1e-12, 1e-12 - annihilated)
            .with("max_entry", annihilated),
    );
    let defect = w.dot(&t);
    let bound = defect.abs() / w.norm();
    report.push(
        Clause::new(
            "best residual respects the dependency bound",
            fit.residual_norm >= bound - ROUNDING_SLACK,
            fit.residual_norm - bound,
        )
        .with("defect", defect)
        .with("bound", bound),
    );
    let svd = c.clone().svd(true, false);
    let u = svd.u.unwrap();
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let mut proj = DVector::zeros(t.len());
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            let col = u.column(k);
            proj += col * col.dot(&t);
        }
    }
    let distance = (&t - proj).norm();
    report.push(
        Clause::new("relaxed linear system certificate", distance >= bound - ROUNDING_SLACK, distance - bound)
            .with("distance", distance),
    );
    if let Some(p) = parity {
        report.push(Clause::positive("parity sum phi(e1) + phi(-e1) > 0", p).with("parity", p));
    }
}
