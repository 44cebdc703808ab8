use std::sync::Arc;
use std::time::Instant;

use serde_json::{json, Value};

use homogen::cell::{minimize, refinement_deltas, CellProblem};
use homogen::homogenize::{
    epsilon_sweep_compare, estimate_f_hom, quasiconvexity_probe, rank_one_probe, HomSchedule, ResolutionRule,
};
use homogen::models::CoefficientFamily;
use homogen::models::{
    build_bump_h, builtin, make_dominance_g, Cutoff, Dominance, Lagrangian, NonEvenCartan, NonEvenDominance,
    NormCartan, QuadraticForm,
};
use homogen::tiling::{build_tiling, verify_subadditivity, verify_tiling, TilingParams};
use homogen::verify::{
    bump_inequality_check, cartan_parity_margin, closing_example_identity, dominance_identity_check, lsc_energy_check,
    product_system_infeasibility_seeded, relative_density_check, swap_contradiction_demo, ProductConstraintSystem,
    SwapMode,
};
use homogen::{Grid, Matrix, VerificationReport};

use crate::config::{CommandKind, ModelRef, RunConfig};

/// Result of one task: text lines, one delimited table and a JSON value.
pub struct Section {
    pub name: String,
    pub passed: bool,
    /// A solver quality problem (line-search failure).
    pub quality_flag: bool,
    pub warnings: Vec<String>,
    pub text: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub json: Value,
    pub seconds: f64,
}

impl Section {
    fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            passed: true,
            quality_flag: false,
            warnings: Vec::new(),
            text: String::new(),
            header: Vec::new(),
            rows: Vec::new(),
            json: Value::Null,
            seconds: 0.0,
        }
    }
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn load_model(cfg: &RunConfig) -> Result<Arc<dyn Lagrangian>, String> {
    let model = cfg.model.as_ref().ok_or("no model selected")?;
    let shape = cfg.y.as_ref().map(|y| y.shape());
    let lag: Arc<dyn Lagrangian> = match model {
        ModelRef::Builtin(id) => builtin(id, shape).map_err(|e| e.to_string())?,
        ModelRef::File(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read '{}': {e}", p.display()))?;
            Arc::new(QuadraticForm::from_toml_str(&text).map_err(|e| e.to_string())?)
        }
    };
    if let Some(y) = &cfg.y {
        if y.shape() != (lag.target_dim(), lag.source_dim()) {
            return Err(format!(
                "Y is {}x{} but model '{}' needs {}x{}",
                y.rows(),
                y.cols(),
                lag.name(),
                lag.target_dim(),
                lag.source_dim()
            ));
        }
    }
    Ok(lag)
}

fn schedule(cfg: &RunConfig) -> Result<HomSchedule, String> {
    HomSchedule::new(cfg.t_values.clone(), ResolutionRule::PerUnit(cfg.resolution), cfg.solve.clone())
        .map_err(|e| e.to_string())
}

fn y_of(cfg: &RunConfig) -> Matrix {
    cfg.y.clone().expect("validated")
}

fn report_section(report: &VerificationReport) -> Section {
    let mut s = Section::new(report.name.clone());
    s.passed = report.overall();
    s.text = report.to_text();
    s.header = ["report", "clause", "passed", "margin"].iter().map(|h| h.to_string()).collect();
    for c in &report.clauses {
        s.rows.push(vec![report.name.clone(), c.description.clone(), c.passed.to_string(), num(c.margin)]);
    }
    s.json = serde_json::to_value(report).unwrap_or(Value::Null);
    s
}

fn homogenize(cfg: &RunConfig) -> Result<Vec<Section>, String> {
    let lag = load_model(cfg)?;
    let y = y_of(cfg);
    let r = estimate_f_hom(lag.clone(), &y, &schedule(cfg)?).map_err(|e| e.to_string())?;
    let mut s = Section::new("homogenize");
    s.passed = r.growth_sandwich(lag.as_ref(), 1e-6);
    s.quality_flag = r.line_search_failed;
    if !r.all_converged {
        s.warnings.push("some cell solves hit the iteration budget".into());
    }
    let mut text = format!("model {}\nY {}\n", lag.name(), y);
    for row in &r.rows {
        text.push_str(&format!(
            "t={} g_t={} converged={} iterations={}\n",
            num(row.t),
            num(row.energy),
            row.converged,
            row.iterations
        ));
    }
    text.push_str(&format!(
        "f_hom_estimate {}\nslope {}\nfit_residual {}\nmodel {}\ngrowth_bounds {}\n",
        num(r.f_hom_estimate),
        num(r.slope),
        num(r.fit_residual),
        r.model,
        if s.passed { "ok" } else { "violated" }
    ));
    s.text = text;
    s.header = ["t", "g_t", "converged", "iterations", "residual"].iter().map(|h| h.to_string()).collect();
    for (row, res) in r.rows.iter().zip(&r.residuals) {
        s.rows.push(vec![
            num(row.t),
            num(row.energy),
            row.converged.to_string(),
            row.iterations.to_string(),
            num(*res),
        ]);
    }
    s.json = serde_json::to_value(&r).unwrap_or(Value::Null);
    Ok(vec![s])
}

fn cell(cfg: &RunConfig) -> Result<(Vec<Section>, String), String> {
    let lag = load_model(cfg)?;
    let y = y_of(cfg);
    let t = cfg.t_values[0];
    let problem = CellProblem::with_resolution(lag.clone(), y.clone(), t, cfg.resolution).map_err(|e| e.to_string())?;
    let sol = minimize(&problem, &cfg.solve).map_err(|e| e.to_string())?;
    let mut s = Section::new("cell");
    s.quality_flag = sol.line_search_failed;
    if !sol.converged && !sol.line_search_failed {
        s.warnings.push(format!("cell solve did not converge within {} iterations", cfg.solve.max_iterations));
    }
    s.text = format!(
        "model {}\nY {}\nt {}\nenergy {}\niterations {}\nconverged {}\nline_search_failed {}\nbest_run {}\n",
        lag.name(),
        y,
        num(t),
        num(sol.energy),
        sol.iterations_used,
        sol.converged,
        sol.line_search_failed,
        sol.best_run
    );
    s.header =
        ["run", "energy", "iterations", "converged", "line_search_failed"].iter().map(|h| h.to_string()).collect();
    for (k, r) in sol.runs.iter().enumerate() {
        s.rows.push(vec![
            k.to_string(),
            num(r.energy),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.line_search_failed.to_string(),
        ]);
    }
    let mut json = serde_json::to_value(&sol).unwrap_or(Value::Null);
    if cfg.resolution >= 2 {
        let coarse = cfg.resolution / 2;
        match refinement_deltas(lag.clone(), &y, t, &[coarse], &cfg.solve) {
            Ok(rows) => {
                let delta = sol.energy - rows[0].energy;
                s.text.push_str(&format!(
                    "refinement_delta {} (per_unit {} -> {})\n",
                    num(delta),
                    coarse,
                    cfg.resolution
                ));
                if let Value::Object(map) = &mut json {
                    map.insert(
                        "refinement_delta".into(),
                        serde_json::json!({ "coarse_per_unit": coarse, "delta": delta }),
                    );
                }
            }
            Err(e) => s.warnings.push(format!("no refinement delta: {e}")),
        }
    }
    s.json = json;
    Ok((vec![s], sol.minimizer.to_text()))
}

fn epsilon_sweep(cfg: &RunConfig) -> Result<Vec<Section>, String> {
    let lag = load_model(cfg)?;
    let y = y_of(cfg);
    let (report, rows, hom) =
        epsilon_sweep_compare(lag, &y, &cfg.eps_values, &schedule(cfg)?).map_err(|e| e.to_string())?;
    let mut s = report_section(&report);
    s.quality_flag = hom.line_search_failed;
    s.warnings.extend(report.notes.iter().cloned());
    s.text.push_str(&format!("f_hom_estimate {}\n", num(hom.f_hom_estimate)));
    for r in &rows {
        s.text.push_str(&format!("eps={} energy={} converged={}\n", num(r.epsilon), num(r.energy), r.converged));
    }
    s.header = ["epsilon", "energy", "converged", "iterations"].iter().map(|h| h.to_string()).collect();
    s.rows = rows
        .iter()
        .map(|r| vec![num(r.epsilon), num(r.energy), r.converged.to_string(), r.iterations.to_string()])
        .collect();
    s.json = json!({ "report": report, "rows": rows, "homogenized": hom });
    Ok(vec![s])
}

fn tiling(cfg: &RunConfig) -> Result<Vec<Section>, String> {
    let (t, s_len, m) = cfg.tiling.expect("validated");
    let y = cfg.y.clone().unwrap_or_else(|| Matrix::zeros(1, m));
    let tiling = build_tiling(TilingParams { t, s: s_len, m, y: y.clone() }).map_err(|e| e.to_string())?;
    let report = verify_tiling(&tiling);
    let mut s = report_section(&report);
    s.text = format!("{}{}", tiling.dump(), report.to_text());
    s.header = ["z", "sigma", "tau", "lambda"].iter().map(|h| h.to_string()).collect();
    let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    for k in 0..tiling.len() {
        s.rows.push(vec![
            join(&tiling.index_set[k]),
            join(&tiling.sigma[k]),
            join(&tiling.tau[k]),
            join(&tiling.lambda[k]),
        ]);
    }
    s.json = json!({ "tiling": tiling, "report": report });
    let mut out = vec![s];
    if cfg.subadditivity {
        let lag = load_model(cfg)?;
        let (report, parts) =
            verify_subadditivity(lag, &y, t, s_len, &cfg.solve, cfg.resolution).map_err(|e| e.to_string())?;
        let mut sub = report_section(&report);
        sub.json = json!({ "report": report, "parts": parts });
        out.push(sub);
    }
    Ok(out)
}

fn timed(name: &str, f: impl FnOnce() -> Result<VerificationReport, String>) -> Section {
    let start = Instant::now();
    let mut s = match f() {
        Ok(r) => report_section(&r),
        Err(e) => {
            let mut s = Section::new(name);
            s.passed = false;
            s.warnings.push(format!("{name}: {e}"));
            s.text = format!("{name} ERROR {e}\n");
            s
        }
    };
    s.seconds = start.elapsed().as_secs_f64();
    s
}

fn nonuap_y() -> Matrix {
    let r2 = 2f64.sqrt();
    Matrix::from_rows(&[&[1.0, 1.0], &[r2, r2]]).unwrap()
}

fn verify(cfg: &RunConfig) -> Result<Vec<Section>, String> {
    let seed = cfg.seed;
    let mut out = Vec::new();
    let err = |e: homogen::Error| e.to_string();
    for group in &cfg.suite {
        match group.as_str() {
            "relative-density" => {
                for l in [1.0, 10.0] {
                    out.push(timed("relative-density", || Ok(relative_density_check(&nonuap_y(), 0.5, l))));
                }
            }
            "swap" => {
                let grid = Grid::new(2, 1.0, 16).map_err(err)?;
                let families = [
                    (SwapMode::Isotropic, CoefficientFamily::isotropic(4, 3)),
                    (SwapMode::Bild, CoefficientFamily::target_metric(4)),
                    (SwapMode::Urbild, CoefficientFamily::source_metric(4)),
                ];
                for (mode, fam) in families {
                    out.push(timed(&format!("swap[{}]", mode.name()), || {
                        swap_contradiction_demo(&NonEvenDominance, &fam, &grid, mode, None, seed).map_err(err)
                    }));
                }
            }
            "products" => {
                let systems = [
                    Ok(ProductConstraintSystem::finsler_asym()),
                    Ok(ProductConstraintSystem::feasible_control()),
                    ProductConstraintSystem::cartan(&NormCartan::new(1.0), 1.0),
                    ProductConstraintSystem::cartan(&NonEvenCartan, 1.0),
                    ProductConstraintSystem::dominance(&make_dominance_g()),
                ];
                for sys in systems {
                    out.push(timed("products", || Ok(product_system_infeasibility_seeded(&sys.map_err(err)?, seed))));
                }
                if let Some(p) = &cfg.system {
                    let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read '{}': {e}", p.display()))?;
                    let (sys, warnings) = ProductConstraintSystem::from_toml_str(&text).map_err(err)?;
                    let mut s = timed("products", || Ok(product_system_infeasibility_seeded(&sys, seed)));
                    s.warnings.extend(warnings);
                    out.push(s);
                }
            }
            "dominance" => {
                for c in [Cutoff::Quintic, Cutoff::Cubic] {
                    out.push(timed("dominance", || Ok(dominance_identity_check(&Dominance::new(c)))));
                }
            }
            "lsc" => {
                for (w, h) in [(1.0, 1.0), (2.0, 1.0)] {
                    out.push(timed("lsc", || lsc_energy_check(w, h, 1.0).map_err(err)));
                }
            }
            "closing" => out.push(timed("closing", || Ok(closing_example_identity(1000, seed)))),
            "parity" => {
                out.push(timed("parity", || Ok(cartan_parity_margin(&NormCartan::new(1.0)))));
                out.push(timed("parity", || Ok(cartan_parity_margin(&NonEvenCartan))));
            }
            "bump" => out.push(timed("bump", || {
                let h = build_bump_h(4.0, 0.02).map_err(err)?;
                let grid = Grid::new(2, 1.0, 4).map_err(err)?;
                bump_inequality_check(Arc::new(make_dominance_g()), &h, 0.1, &grid).map_err(err)
            })),
            "tiling" => {
                for (t, s, m) in [(2, 13, 2), (1, 6, 1), (1, 11, 2), (3, 40, 2)] {
                    out.push(timed("tiling", || {
                        let y = Matrix::from_vec(1, m, vec![0.5; m]).map_err(err)?;
                        Ok(verify_tiling(&build_tiling(TilingParams { t, s, m, y }).map_err(err)?))
                    }));
                }
            }
            other => return Err(format!("unknown check group '{other}'")),
        }
    }
    Ok(out)
}

fn qc_check(cfg: &RunConfig) -> Result<Vec<Section>, String> {
    let lag = load_model(cfg)?;
    if lag.depends_on_x() || lag.depends_on_s() {
        return Err(format!("qc-check needs a density independent of x and s; '{}' is not", lag.name()));
    }
    let y = y_of(cfg);
    let (x0, s0) = (vec![0.0; lag.source_dim()], vec![0.0; lag.target_dim()]);
    let density = |a: &Matrix| lag.eval(&x0, &s0, a);
    let qc = quasiconvexity_probe(&density, &y, cfg.samples, cfg.seed);
    let r1 = rank_one_probe(&density, &y, cfg.samples, cfg.seed);
    let mut report = VerificationReport::new(format!("qc-check[{}]", lag.name()));
    let tol = 1e-9;
    report.push(homogen::Clause::new("no quasiconvexity violation", qc >= -tol, qc + tol).with("worst", qc));
    report.push(homogen::Clause::new("no rank-one convexity violation", r1 >= -tol, r1 + tol).with("worst", r1));
    Ok(vec![report_section(&report)])
}

/// Runs the command. The extra string is an auxiliary artifact (the cell
/// minimizer) when the command produces one.
pub fn execute(cfg: &RunConfig) -> Result<(Vec<Section>, Option<String>), String> {
    let start = Instant::now();
    let (mut sections, extra) = match cfg.command {
        CommandKind::Homogenize => (homogenize(cfg)?, None),
        CommandKind::Cell => {
            let (s, field) = cell(cfg)?;
            (s, Some(field))
        }
        CommandKind::EpsilonSweep => (epsilon_sweep(cfg)?, None),
        CommandKind::Tiling => (tiling(cfg)?, None),
        CommandKind::Verify => (verify(cfg)?, None),
        CommandKind::QcCheck => (qc_check(cfg)?, None),
    };
    if cfg.command != CommandKind::Verify {
        if let Some(first) = sections.first_mut() {
            first.seconds = start.elapsed().as_secs_f64();
        }
    }
    Ok((sections, extra))
}
