//! Polar-rose evaluation of the numerical baseline and the hybrid solver,
//! and the multi-resolution convergence study.

use std::time::{Duration, Instant};

use curvex_core::field::{
    curvature, evaluate, interface_nodes, normals, project_to_interface, reinitialize, Grid, Node,
    Region, ScalarField,
};
use curvex_core::geometry::RoseShape;
use curvex_core::hybrid::{Fields, Hybrid};
use curvex_core::metrics::{ErrorStats, Regression};
use curvex_core::neural::Corrector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of timed repetitions; the shortest is reported.
pub const TIMING_REPETITIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BaselineNu10,
    BaselineNu20,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionJson {
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
}

/// Error summary of one method over all interface nodes of a rose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub nu: u32,
    pub mae: f64,
    pub maxae: f64,
    pub rmse: f64,
    pub n_nodes: usize,
    /// Shortest curvature pass in seconds (normals, curvature, per-node values).
    pub wall_time: f64,
    /// Fit of predicted against true `hk*`.
    pub regression: Option<RegressionJson>,
    pub network_rows: usize,
    pub fallbacks: usize,
}

impl EvalReport {
    fn new(method: Method, nu: u32, pred: &[f64], truth: &[f64], wall_time: Duration) -> Self {
        let s = ErrorStats::new(pred, truth);
        Self {
            method,
            nu,
            mae: s.mae,
            maxae: s.maxae,
            rmse: s.rmse,
            n_nodes: s.n,
            wall_time: wall_time.as_secs_f64(),
            regression: Regression::fit(truth, pred).map(|r| RegressionJson {
                slope: r.slope,
                intercept: r.intercept,
                pearson: r.rho,
            }),
            network_rows: 0,
            fallbacks: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoseCase {
    pub eta: u32,
    pub a: f64,
    pub b: f64,
    pub petals: u32,
}

/// Reinitialized rose level set with its interface nodes and exact targets at
/// the projected points.
pub struct RoseField {
    pub phi: ScalarField,
    pub nodes: Vec<Node>,
    pub targets: Vec<f64>,
}

pub fn rose_field(case: &RoseCase, nu: u32) -> Result<RoseField> {
    let shape = RoseShape::new(case.a, case.b, case.petals)?;
    let grid = Grid::new(case.eta)?;
    let h = grid.h();
    let region = Region::centered([0.0, 0.0], case.a + case.b + grid.band_width() + 2.0 * h);
    let phi = reinitialize(&evaluate(&grid, &shape, &region)?, nu);
    let n = normals(&phi);
    let mut nodes = Vec::new();
    let mut targets = Vec::new();
    for node in interface_nodes(&phi) {
        let (Some(v), Some(nv)) = (phi.get(node), n.get(node)) else {
            continue;
        };
        if n.is_degenerate(node) {
            continue;
        }
        let x = project_to_interface(phi.position(node), v, nv)?;
        nodes.push(node);
        targets.push(h * shape.target_curvature(x));
    }
    Ok(RoseField {
        phi,
        nodes,
        targets,
    })
}

fn min_time<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, Duration)> {
    let mut best = Duration::MAX;
    let mut out = None;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        let v = f()?;
        best = best.min(t.elapsed());
        out = Some(v);
    }
    Ok((out.expect("at least one repetition"), best))
}

/// Numerical `hk` at every node of `field`, timed.
pub fn baseline(field: &RoseField, reps: usize) -> Result<(Vec<f64>, Duration)> {
    min_time(reps, || {
        let n = normals(&field.phi);
        let k = curvature(&field.phi);
        let f = Fields {
            phi: &field.phi,
            normals: &n,
            curvature: &k,
        };
        field
            .nodes
            .iter()
            .map(|&node| f.numerical_hk(node).map_err(Error::from))
            .collect()
    })
}

/// Hybrid `hk` at every node of `field`, timed; also returns network rows and
/// fallbacks of the last run.
pub fn hybrid<C: Corrector>(
    field: &RoseField,
    solver: &Hybrid<'_, C>,
    reps: usize,
) -> Result<(Vec<f64>, usize, usize, Duration)> {
    let (out, t) = min_time(reps, || {
        let n = normals(&field.phi);
        let k = curvature(&field.phi);
        let f = Fields {
            phi: &field.phi,
            normals: &n,
            curvature: &k,
        };
        Ok(solver.ml_curvature_batch(&f, &field.nodes)?)
    })?;
    Ok((out.values, out.network_rows, out.fallbacks, t))
}

/// Per-node values at the hybrid's reinitialization count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRow {
    pub true_hk: f64,
    pub baseline_hk: f64,
    pub hybrid_hk: f64,
}

pub const CORRELATION_HEADER: [&str; 3] = ["true_hk", "baseline_hk", "hybrid_hk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoseReport {
    pub case: RoseCase,
    pub h: f64,
    pub reports: Vec<EvalReport>,
}

impl RoseReport {
    pub fn get(&self, method: Method) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

/// Baselines at 10 and 20 reinitialization steps and the hybrid at `nu`.
pub fn evaluate_rose<C: Corrector>(
    case: &RoseCase,
    nu: u32,
    solver: &Hybrid<'_, C>,
    reps: usize,
) -> Result<(RoseReport, Vec<CorrelationRow>)> {
    let mut reports = Vec::new();
    for (method, steps) in [(Method::BaselineNu10, 10), (Method::BaselineNu20, 20)] {
        let field = rose_field(case, steps)?;
        let (pred, t) = baseline(&field, reps)?;
        reports.push(EvalReport::new(method, steps, &pred, &field.targets, t));
    }
    let field = rose_field(case, nu)?;
    let (base, _) = baseline(&field, 1)?;
    let (pred, rows, fallbacks, t) = hybrid(&field, solver, reps)?;
    let mut report = EvalReport::new(Method::Hybrid, nu, &pred, &field.targets, t);
    report.network_rows = rows;
    report.fallbacks = fallbacks;
    reports.push(report);
    let correlation = field
        .targets
        .iter()
        .zip(base.iter().zip(&pred))
        .map(|(&t, (&b, &p))| CorrelationRow {
            true_hk: t,
            baseline_hk: b,
            hybrid_hk: p,
        })
        .collect();
    Ok((
        RoseReport {
            case: *case,
            h: 1.0 / (1u64 << case.eta) as f64,
            reports,
        },
        correlation,
    ))
}

/// Errors at one resolution; hybrid columns are absent without a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eta: u32,
    pub n_nodes: usize,
    pub baseline_mae: f64,
    pub baseline_maxae: f64,
    pub hybrid_mae: Option<f64>,
    pub hybrid_maxae: Option<f64>,
}

pub const CONVERGENCE_HEADER: [&str; 10] = [
    "eta",
    "n_nodes",
    "baseline_mae",
    "baseline_maxae",
    "hybrid_mae",
    "hybrid_maxae",
    "baseline_mae_order",
    "baseline_maxae_order",
    "hybrid_mae_order",
    "hybrid_maxae_order",
];

/// `log2(previous / current)`, the observed order between consecutive levels.
pub fn order(previous: Option<f64>, current: Option<f64>) -> Option<f64> {
    match (previous, current) {
        (Some(p), Some(c)) if p > 0.0 && c > 0.0 => Some((p / c).log2()),
        _ => None,
    }
}

/// Table rows with order columns; missing values become empty cells.
pub fn convergence_table(rows: &[ConvergenceRow]) -> Vec<Vec<String>> {
    let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            let prev = k.checked_sub(1).map(|p| rows[p]);
            vec![
                r.eta.to_string(),
                r.n_nodes.to_string(),
                r.baseline_mae.to_string(),
                r.baseline_maxae.to_string(),
                cell(r.hybrid_mae),
                cell(r.hybrid_maxae),
                cell(order(prev.map(|p| p.baseline_mae), Some(r.baseline_mae))),
                cell(order(
                    prev.map(|p| p.baseline_maxae),
                    Some(r.baseline_maxae),
                )),
                cell(order(prev.and_then(|p| p.hybrid_mae), r.hybrid_mae)),
                cell(order(prev.and_then(|p| p.hybrid_maxae), r.hybrid_maxae)),
            ]
        })
        .collect()
}

/// Baseline (and, when `solver` is given, hybrid) errors at one level.
pub fn convergence_row<C: Corrector>(
    case: &RoseCase,
    nu: u32,
    solver: Option<&Hybrid<'_, C>>,
) -> Result<ConvergenceRow> {
    let field = rose_field(case, nu)?;
    let (base, _) = baseline(&field, 1)?;
    let b = ErrorStats::new(&base, &field.targets);
    let h = match solver {
        Some(s) => {
            let (pred, ..) = hybrid(&field, s, 1)?;
            Some(ErrorStats::new(&pred, &field.targets))
        }
        None => None,
    };
    Ok(ConvergenceRow {
        eta: case.eta,
        n_nodes: field.nodes.len(),
        baseline_mae: b.mae,
        baseline_maxae: b.maxae,
        hybrid_mae: h.map(|s| s.mae),
        hybrid_maxae: h.map(|s| s.maxae),
    })
}
