//! AUC, experiment protocols, grid search, confidence sweeps and the ridge
//! baseline.
//!
//! Every run draws its split and initialization from its own RNG stream,
//! derived from the plan seed and the run's position in the plan, so the
//! tables do not depend on how runs are scheduled.

mod auc;
mod split;

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use auc::{auc, auc_pairwise};
pub use split::{protocol_split, stratified_sample, validation_split, Split};

use crate::data::{HyperParams, LatentFactors, SideFeatures, TestRecord};
use crate::error::{Error, Result};
use crate::optimizer::{fit, fit_from, init_factors, FitOutcome, InitStrategy, Problem, RowPenalty};
use crate::predictor::{selected_for_side, side_feature_count};
use crate::scalar::Scalar;

const PROTOCOL_STREAM: u64 = 1 << 32;
const GRID_STREAM: u64 = 2 << 32;
const XI_STREAM: u64 = 3 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bvsimc,
    RidgeBaseline,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bvsimc => "bvsimc",
            Self::RidgeBaseline => "ridge-baseline",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bvsimc" => Ok(Self::Bvsimc),
            "ridge-baseline" | "ridge" => Ok(Self::RidgeBaseline),
            other => Err(Error::Validation(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Share of all cells held out for scoring.
    pub oob_frac: f64,
    /// Shares of the remaining cells whose labels are exposed for training.
    pub rho_grid: Vec<f64>,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub lambda0_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub r_grid: Vec<usize>,
    /// Share of training-visible cells used to validate grid cells.
    pub validation_frac: f64,
    /// Ridge penalty weight of the baseline.
    pub ridge_gamma: f64,
    /// Confidence weight used by the baseline, which has no weighting of
    /// its own.
    pub ridge_xi: f64,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            oob_frac: 0.1,
            rho_grid: vec![1.0],
            repetitions: 1,
            methods: vec![Method::Bvsimc],
            lambda0_grid: vec![1.0, 5.0, 10.0, 50.0, 100.0, 1000.0, 10000.0],
            eta_grid: vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            r_grid: vec![25],
            validation_frac: 0.1,
            ridge_gamma: 1.0,
            ridge_xi: 1.0,
            init: InitStrategy::default(),
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        frac("oob_frac", self.oob_frac)?;
        frac("validation_frac", self.validation_frac)?;
        if self.rho_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::Validation("rho values must lie in (0, 1]".into()));
        }
        if self.rho_grid.is_empty()
            || self.methods.is_empty()
            || self.lambda0_grid.is_empty()
            || self.eta_grid.is_empty()
            || self.r_grid.is_empty()
        {
            return Err(Error::Validation("plan grids must be nonempty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Validation("repetitions must be ≥ 1".into()));
        }
        if !(self.ridge_gamma >= 0.0 && self.ridge_xi >= 1.0) {
            return Err(Error::Validation("ridge_gamma must be ≥ 0 and ridge_xi ≥ 1".into()));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Logits of the listed cells.
pub fn test_logits<F: Scalar>(
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    factors: &LatentFactors<F>,
    cells: &[TestRecord],
) -> Result<Vec<f64>> {
    let ua: Array2<F> = u.matrix().dot(&factors.a);
    let vb: Array2<F> = v.matrix().dot(&factors.b);
    cells
        .iter()
        .map(|r| {
            if r.row >= ua.nrows() || r.col >= vb.nrows() {
                return Err(Error::Dimension(format!("test cell ({}, {}) out of bounds", r.row, r.col)));
            }
            Ok(ua.row(r.row).dot(&vb.row(r.col)).to_f64_lossy())
        })
        .collect()
}

/// AUC of the model logits on `cells`.
pub fn score<F: Scalar>(
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    factors: &LatentFactors<F>,
    cells: &[TestRecord],
) -> Result<f64> {
    let scores = test_logits(u, v, factors, cells)?;
    let labels: Vec<u8> = cells.iter().map(|r| r.label).collect();
    auc(&scores, &labels)
}

/// Same likelihood with a `(γ/2)(‖A‖² + ‖B‖²)` penalty and no thresholding.
pub fn fit_ridge_baseline<F: Scalar>(
    data: &Problem<'_, F>,
    hyper: &HyperParams,
    gamma: f64,
    init: InitStrategy,
) -> Result<FitOutcome<F>> {
    let start = init_factors(init, data, hyper.r, hyper.seed)?;
    fit_from(data, hyper, RowPenalty::Ridge { gamma }, start)
}

fn fit_method<F: Scalar>(
    method: Method,
    data: &Problem<'_, F>,
    hyper: &HyperParams,
    plan: &ExperimentPlan,
) -> Result<FitOutcome<F>> {
    match method {
        Method::Bvsimc => fit(data, hyper, plan.init),
        Method::RidgeBaseline => {
            let hyper = HyperParams {
                xi: plan.ridge_xi,
                ..hyper.clone()
            };
            fit_ridge_baseline(data, &hyper, plan.ridge_gamma, plan.init)
        }
    }
}

/// One row of a protocol table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub rho: f64,
    pub repetition: usize,
    pub auc: Option<f64>,
    /// Empty when the run completed; otherwise the reason it was flagged.
    pub flag: String,
    pub n_train_positives: usize,
    pub n_test: usize,
    pub n_test_positives: usize,
    pub selected_a: usize,
    pub selected_b: usize,
    pub sweeps: usize,
    pub converged: bool,
}

/// Wall-clock time of one run, kept apart from the result table so that the
/// table stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub method: Method,
    pub rho: f64,
    pub repetition: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ProtocolOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<Timing>,
}

fn flag_for(err: &Error) -> String {
    match err {
        Error::UndefinedMetric { .. } => "single-class-test".into(),
        Error::Divergence { iteration, .. } => format!("diverged-at-{iteration}"),
        other => format!("failed: {other}"),
    }
}

/// Fits and scores one method on one split.
#[allow(clippy::too_many_arguments)]
fn evaluate_split<F: Scalar>(
    method: Method,
    data: &Problem<'_, F>,
    split: &Split,
    hyper: &HyperParams,
    plan: &ExperimentPlan,
    rho: f64,
    repetition: usize,
) -> Result<(ResultRow, Timing)> {
    let n_test_positives = split.test.iter().filter(|r| r.label == 1).count();
    let mut row = ResultRow {
        method,
        rho,
        repetition,
        auc: None,
        flag: String::new(),
        n_train_positives: split.train.n_positives(),
        n_test: split.test.len(),
        n_test_positives,
        selected_a: 0,
        selected_b: 0,
        sweeps: 0,
        converged: false,
    };
    let start = Instant::now();
    let train = Problem::new(&split.train, data.u, data.v)?;
    match fit_method(method, &train, hyper, plan) {
        Ok(out) => {
            row.sweeps = out.state.sweeps();
            row.converged = out.state.converged;
            row.selected_a = side_feature_count(&selected_for_side(&out.factors.a, data.u));
            row.selected_b = side_feature_count(&selected_for_side(&out.factors.b, data.v));
            match score(data.u, data.v, &out.factors, &split.test) {
                Ok(a) => row.auc = Some(a),
                Err(e) => row.flag = flag_for(&e),
            }
        }
        Err(e @ Error::Divergence { .. }) => row.flag = flag_for(&e),
        Err(e) => return Err(e),
    }
    if !row.flag.is_empty() {
        log::warn!("{method} rho={rho} rep={repetition}: {}", row.flag);
    }
    let timing = Timing {
        method,
        rho,
        repetition,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((row, timing))
}

/// For every `ρ` and repetition: hold out the OOB cells, expose `ρ` of the
/// rest, fit every method on the same split and score the held-out cells.
pub fn run_protocol<F: Scalar>(data: &Problem<'_, F>, plan: &ExperimentPlan, hyper: &HyperParams) -> Result<ProtocolOutput> {
    plan.validate()?;
    hyper.validate()?;
    let runs: Vec<(usize, f64, usize)> = plan
        .rho_grid
        .iter()
        .flat_map(|&rho| (0..plan.repetitions).map(move |rep| (rho, rep)))
        .enumerate()
        .map(|(id, (rho, rep))| (id, rho, rep))
        .collect();
    let results: Vec<Result<Vec<(ResultRow, Timing)>>> = runs
        .par_iter()
        .map(|&(id, rho, rep)| {
            let mut rng = stream_rng(plan.seed, PROTOCOL_STREAM + id as u64);
            let split = protocol_split(&mut rng, data.y, plan.oob_frac, rho)?;
            let run_hyper = HyperParams {
                seed: rng.random(),
                ..hyper.clone()
            };
            plan.methods
                .iter()
                .map(|&m| evaluate_split(m, data, &split, &run_hyper, plan, rho, rep))
                .collect()
        })
        .collect();
    let mut out = ProtocolOutput::default();
    for r in results {
        for (row, timing) in r? {
            out.rows.push(row);
            out.timings.push(timing);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub rho: f64,
    pub mean_auc: Option<f64>,
    pub runs: usize,
    pub flagged: usize,
}

/// Mean AUC per method and `ρ` over unflagged runs.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for row in rows {
        let idx = match out.iter().position(|s| s.method == row.method && s.rho == row.rho) {
            Some(i) => i,
            None => {
                out.push(SummaryRow {
                    method: row.method,
                    rho: row.rho,
                    mean_auc: None,
                    runs: 0,
                    flagged: 0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.runs += 1;
        match row.auc {
            Some(a) => {
                let n = (s.runs - s.flagged) as f64;
                s.mean_auc = Some(s.mean_auc.map_or(a, |m| m + (a - m) / n));
            }
            None => s.flagged += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda0: f64,
    pub eta: f64,
    pub r: usize,
    pub auc: Option<f64>,
    pub flag: String,
    pub sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: HyperParams,
    pub table: Vec<GridRow>,
}

/// Prefers higher AUC, then larger `λ0`, then smaller `r`.
fn better(a: &GridRow, b: &GridRow) -> bool {
    let (Some(x), Some(y)) = (a.auc, b.auc) else {
        return a.auc.is_some();
    };
    x.total_cmp(&y)
        .then(a.lambda0.total_cmp(&b.lambda0))
        .then(b.r.cmp(&a.r))
        .is_gt()
}

/// Tunes `λ0` (both sides), `η` and `r` on a validation split carved from
/// the training-visible cells; the held-out OOB cells are never touched.
pub fn grid_search<F: Scalar>(data: &Problem<'_, F>, plan: &ExperimentPlan, base: &HyperParams) -> Result<GridOutcome> {
    plan.validate()?;
    base.validate()?;
    let mut rng = stream_rng(plan.seed, GRID_STREAM);
    let outer = protocol_split(&mut rng, data.y, plan.oob_frac, 1.0)?;
    let inner = validation_split(&mut rng, &outer.train, &outer.test, plan.validation_frac)?;
    let seed: u64 = rng.random();
    let train = Problem::new(&inner.train, data.u, data.v)?;

    let cells: Vec<(f64, f64, usize)> = plan
        .lambda0_grid
        .iter()
        .flat_map(|&l| plan.eta_grid.iter().flat_map(move |&e| plan.r_grid.iter().map(move |&r| (l, e, r))))
        .collect();
    let table: Vec<GridRow> = cells
        .par_iter()
        .map(|&(lambda0, eta, r)| {
            let hyper = HyperParams {
                eta,
                r,
                seed,
                ..base.clone()
            }
            .with_lambda0(lambda0);
            let mut row = GridRow {
                lambda0,
                eta,
                r,
                auc: None,
                flag: String::new(),
                sweeps: 0,
            };
            let result = hyper
                .validate()
                .and_then(|_| fit(&train, &hyper, plan.init))
                .and_then(|out| {
                    row.sweeps = out.state.sweeps();
                    score(data.u, data.v, &out.factors, &inner.test)
                });
            match result {
                Ok(a) => row.auc = Some(a),
                Err(e) => {
                    log::warn!("grid cell lambda0={lambda0} eta={eta} r={r}: {e}");
                    row.flag = flag_for(&e);
                }
            }
            row
        })
        .collect();

    let mut best: Option<&GridRow> = None;
    for row in table.iter().filter(|r| r.auc.is_some()) {
        if best.is_none_or(|b| better(row, b)) {
            best = Some(row);
        }
    }
    let Some(best) = best else {
        let diagnostics: Vec<String> = table
            .iter()
            .map(|r| format!("lambda0={} eta={} r={}: {}", r.lambda0, r.eta, r.r, r.flag))
            .collect();
        return Err(Error::AllConfigurationsFailed(diagnostics.join("; ")));
    };
    let best_hyper = HyperParams {
        eta: best.eta,
        r: best.r,
        ..base.clone()
    }
    .with_lambda0(best.lambda0);
    Ok(GridOutcome { best: best_hyper, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    pub xi: f64,
    pub auc: Option<f64>,
    pub flag: String,
    pub selected_a: usize,
    pub selected_b: usize,
    pub sweeps: usize,
}

/// One fit per confidence weight on a single shared split. Duplicate
/// weights are dropped with a warning.
pub fn xi_sweep<F: Scalar>(
    data: &Problem<'_, F>,
    plan: &ExperimentPlan,
    base: &HyperParams,
    xi_grid: &[f64],
) -> Result<Vec<XiRow>> {
    plan.validate()?;
    let mut grid: Vec<f64> = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        if grid.contains(&xi) {
            log::warn!("duplicate xi value {xi} dropped");
        } else {
            grid.push(xi);
        }
    }
    let mut rng = stream_rng(plan.seed, XI_STREAM);
    let split = protocol_split(&mut rng, data.y, plan.oob_frac, 1.0)?;
    let seed: u64 = rng.random();
    let train = Problem::new(&split.train, data.u, data.v)?;
    grid.par_iter()
        .map(|&xi| {
            let hyper = HyperParams {
                xi,
                seed,
                ..base.clone()
            };
            hyper.validate()?;
            let mut row = XiRow {
                xi,
                auc: None,
                flag: String::new(),
                selected_a: 0,
                selected_b: 0,
                sweeps: 0,
            };
            match fit(&train, &hyper, plan.init) {
                Ok(out) => {
                    row.sweeps = out.state.sweeps();
                    row.selected_a = side_feature_count(&selected_for_side(&out.factors.a, data.u));
                    row.selected_b = side_feature_count(&selected_for_side(&out.factors.b, data.v));
                    match score(data.u, data.v, &out.factors, &split.test) {
                        Ok(a) => row.auc = Some(a),
                        Err(e) => row.flag = flag_for(&e),
                    }
                }
                Err(e @ Error::Divergence { .. }) => row.flag = flag_for(&e),
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect()
}
