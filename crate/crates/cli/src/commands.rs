use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use ssgl_imc::evaluation::{auc, grid_search, run_protocol, summarize, test_logits, xi_sweep};
use ssgl_imc::io::{load_interactions, load_side_features, load_test_set, InteractionFormat};
use ssgl_imc::model_file::{load_model, save_model, ModelHeader};
use ssgl_imc::optimizer::{fit_from, init_factors, RowPenalty};
use ssgl_imc::predictor::{probabilities, rank_cells, selected_for_side, side_feature_count, SelectedFeature};
use ssgl_imc::synth::{self, apply_masking, generate_truth, write_bundle};
use ssgl_imc::{Error, InteractionMatrix, Problem, SideFeatures};

use crate::config::{DataConfig, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.ssgl";
pub const TRACE_FILE: &str = "trace.csv";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const SELECTED_FILE: &str = "selected_features.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TEST_SCORES_FILE: &str = "test_scores.csv";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const SUMMARY_TEXT_FILE: &str = "summary.txt";
pub const GRID_FILE: &str = "grid.csv";
pub const BEST_FILE: &str = "best.json";
pub const XI_FILE: &str = "xi_sweep.csv";

/// The fit diverged; diagnostics were written before returning this.
#[derive(Debug, thiserror::Error)]
#[error("fit diverged at sweep {iteration}: {reason} (see {path})")]
pub struct Diverged {
    pub iteration: usize,
    pub reason: String,
    pub path: PathBuf,
}

/// What a command read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
}

impl Artifacts {
    fn wrote(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }
}

struct Data {
    y: InteractionMatrix,
    u: SideFeatures<f64>,
    v: SideFeatures<f64>,
}

fn resolve(explicit: &Option<PathBuf>, bundle: &Option<PathBuf>, file: &str, what: &str) -> Result<PathBuf> {
    match (explicit, bundle) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(file)),
        (None, None) => bail!("no {what} given: pass --{what} or --bundle"),
    }
}

fn load_data(cfg: &DataConfig, art: &mut Artifacts) -> Result<Data> {
    let y_path = resolve(&cfg.y, &cfg.bundle, synth::Y_TRAIN_FILE, "y")?;
    let u_path = resolve(&cfg.u, &cfg.bundle, synth::U_FILE, "u")?;
    let v_path = resolve(&cfg.v, &cfg.bundle, synth::V_FILE, "v")?;
    let format = cfg.y_format.unwrap_or_else(|| InteractionFormat::from_path(&y_path));
    let mut y = load_interactions(&y_path, format, cfg.shape)?;
    let u = load_side_features(&u_path, cfg.augment_u)?;
    let v = load_side_features(&v_path, cfg.augment_v)?;
    art.inputs.extend([y_path, u_path, v_path]);
    let test_path = match (&cfg.test_set, &cfg.bundle) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(dir)) => Some(dir.join(synth::TEST_FILE)).filter(|p| p.exists()),
        (None, None) => None,
    };
    if let Some(p) = test_path {
        y = y.with_test_set(load_test_set(&p)?)?;
        art.inputs.push(p);
    }
    Ok(Data { y, u, v })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
}

pub fn simulate(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<()> {
    let sim = &cfg.simulation;
    let truth = generate_truth(sim)?;
    let train = apply_masking(&truth.y_full, sim)?;
    let manifest = write_bundle(out, sim, &truth, &train)?;
    art.outputs.extend(manifest.files.iter().cloned());
    art.wrote(synth::SIM_MANIFEST_FILE);
    println!(
        "simulated {}x{} bundle: {} training positives, {} test cells ({} positive), mean P {:.4}",
        sim.n_rows, sim.n_cols, manifest.n_train_positives, manifest.n_test, manifest.n_test_positives, manifest.mean_p_true
    );
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    sweep: usize,
    log_posterior: f64,
}

#[derive(Serialize)]
struct SelectedRow<'a> {
    side: &'a str,
    rank: usize,
    index: usize,
    name: &'a str,
    norm: f64,
    identity: bool,
}

#[derive(Serialize)]
struct FitReport<'a> {
    likelihood: String,
    penalty: RowPenalty,
    converged: bool,
    sweeps: usize,
    initial_log_posterior: f64,
    final_log_posterior: f64,
    log_likelihood: f64,
    selected_a: usize,
    selected_b: usize,
    theta_a: &'a [f64],
    theta_b: &'a [f64],
    features_a: &'a [SelectedFeature],
    features_b: &'a [SelectedFeature],
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    error: String,
    iteration: usize,
    reason: &'a str,
    trace: &'a [f64],
}

fn likelihood_mode(xi: f64) -> String {
    if xi == 1.0 {
        "bernoulli (xi = 1)".into()
    } else {
        format!("confidence-weighted (xi = {xi})")
    }
}

pub fn fit(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<()> {
    let data = load_data(&cfg.data, art)?;
    let problem = Problem::new(&data.y, &data.u, &data.v)?;
    let start = init_factors(cfg.init, &problem, cfg.hyper.r, cfg.hyper.seed)?;
    let outcome = match fit_from(&problem, &cfg.hyper, cfg.penalty, start) {
        Ok(o) => o,
        Err(e @ Error::Divergence { .. }) => {
            let Error::Divergence { iteration, reason, trace } = &e else { unreachable!() };
            write_json(
                out,
                DIAGNOSTICS_FILE,
                &Diagnostics {
                    error: e.to_string(),
                    iteration: *iteration,
                    reason,
                    trace,
                },
            )?;
            art.wrote(DIAGNOSTICS_FILE);
            return Err(Diverged {
                iteration: *iteration,
                reason: reason.clone(),
                path: out.join(DIAGNOSTICS_FILE),
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };

    let mut header = ModelHeader::from_outcome(&outcome, &cfg.hyper, cfg.penalty);
    header.u_original_d = data.u.is_augmented().then(|| data.u.original_d());
    header.v_original_d = data.v.is_augmented().then(|| data.v.original_d());
    save_model(&out.join(MODEL_FILE), &header, &outcome.factors)?;
    art.wrote(MODEL_FILE);

    let trace: Vec<TraceRow> = outcome
        .state
        .logpost_trace
        .iter()
        .enumerate()
        .map(|(sweep, &log_posterior)| TraceRow { sweep, log_posterior })
        .collect();
    write_csv(out, TRACE_FILE, &trace)?;
    art.wrote(TRACE_FILE);

    let sel_a = selected_for_side(&outcome.factors.a, &data.u);
    let sel_b = selected_for_side(&outcome.factors.b, &data.v);
    let rows: Vec<SelectedRow> = [("A", &sel_a), ("B", &sel_b)]
        .into_iter()
        .flat_map(|(side, sel)| {
            sel.iter().enumerate().map(move |(i, f)| SelectedRow {
                side,
                rank: i + 1,
                index: f.index,
                name: f.name.as_deref().unwrap_or(""),
                norm: f.norm,
                identity: f.identity,
            })
        })
        .collect();
    write_csv(out, SELECTED_FILE, &rows)?;
    art.wrote(SELECTED_FILE);

    let report = FitReport {
        likelihood: likelihood_mode(cfg.hyper.xi),
        penalty: cfg.penalty,
        converged: outcome.state.converged,
        sweeps: outcome.state.sweeps(),
        initial_log_posterior: outcome.state.logpost_trace.first().copied().unwrap_or(f64::NAN),
        final_log_posterior: outcome.final_log_posterior(),
        log_likelihood: outcome.log_likelihood,
        selected_a: side_feature_count(&sel_a),
        selected_b: side_feature_count(&sel_b),
        theta_a: &header.theta_a,
        theta_b: &header.theta_b,
        features_a: &sel_a,
        features_b: &sel_b,
    };
    write_json(out, FIT_REPORT_FILE, &report)?;
    art.wrote(FIT_REPORT_FILE);

    println!(
        "{} likelihood; {} after {} sweeps; log-posterior {:.6e}; selected {} of {} row features, {} of {} column features",
        report.likelihood,
        if report.converged { "converged" } else { "stopped at max_iters" },
        report.sweeps,
        report.final_log_posterior,
        report.selected_a,
        data.u.original_d(),
        report.selected_b,
        data.v.original_d(),
    );
    Ok(())
}

fn load_checked_model(path: &Path, data: &Data, art: &mut Artifacts) -> Result<ssgl_imc::LatentFactors<f64>> {
    let (header, factors) = load_model::<f64>(path)?;
    art.inputs.push(path.to_path_buf());
    if header.d1 != data.u.n_features() || header.d2 != data.v.n_features() {
        return Err(Error::Validation(format!(
            "model expects {} row and {} column features, data has {} and {}",
            header.d1,
            header.d2,
            data.u.n_features(),
            data.v.n_features()
        ))
        .into());
    }
    Ok(factors)
}

pub fn predict(cfg: &RunConfig, model: &Path, output: Option<&Path>, out: &Path, art: &mut Artifacts) -> Result<()> {
    let data = load_data(&cfg.data, art)?;
    let factors = load_checked_model(model, &data, art)?;
    let probs = probabilities(&data.u, &data.v, &factors)?;
    let top_k = cfg.predict.top_k.unwrap_or(usize::MAX);
    let ranking = rank_cells(&probs, &data.y, top_k, cfg.predict.only_zeros)?;
    let path = output.map_or_else(|| out.join(PREDICTIONS_FILE), Path::to_path_buf);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    ranking.write_csv(&mut w)?;
    w.flush()?;
    art.wrote(path.display().to_string());
    println!("wrote {} ranked cells to {}", ranking.entries.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow {
    row: usize,
    col: usize,
    label: u8,
    logit: f64,
}

#[derive(Serialize)]
struct ModelResult {
    auc: Option<f64>,
    flag: String,
    n_test: usize,
    n_test_positives: usize,
    selected_a: usize,
    selected_b: usize,
}

pub fn evaluate(cfg: &RunConfig, model: Option<&Path>, out: &Path, art: &mut Artifacts) -> Result<()> {
    let data = load_data(&cfg.data, art)?;
    match model {
        Some(path) => evaluate_model(&data, path, out, art),
        None => evaluate_protocol(cfg, &data, out, art),
    }
}

fn evaluate_model(data: &Data, path: &Path, out: &Path, art: &mut Artifacts) -> Result<()> {
    let factors = load_checked_model(path, data, art)?;
    let test = data.y.test_set();
    if test.is_empty() {
        bail!("no test set: pass --test-set or a bundle containing {}", synth::TEST_FILE);
    }
    let scores = test_logits(&data.u, &data.v, &factors, test)?;
    let labels: Vec<u8> = test.iter().map(|r| r.label).collect();
    let mut result = ModelResult {
        auc: None,
        flag: String::new(),
        n_test: test.len(),
        n_test_positives: labels.iter().filter(|&&l| l == 1).count(),
        selected_a: side_feature_count(&selected_for_side(&factors.a, &data.u)),
        selected_b: side_feature_count(&selected_for_side(&factors.b, &data.v)),
    };
    match auc(&scores, &labels) {
        Ok(a) => result.auc = Some(a),
        Err(e @ Error::UndefinedMetric { .. }) => {
            log::warn!("{e}");
            result.flag = "single-class-test".into();
        }
        Err(e) => return Err(e.into()),
    }
    let rows: Vec<ScoreRow> = test
        .iter()
        .zip(&scores)
        .map(|(r, &logit)| ScoreRow {
            row: r.row,
            col: r.col,
            label: r.label,
            logit,
        })
        .collect();
    write_csv(out, TEST_SCORES_FILE, &rows)?;
    write_csv(out, RESULTS_FILE, std::slice::from_ref(&result))?;
    write_json(out, SUMMARY_JSON_FILE, &result)?;
    let text = match result.auc {
        Some(a) => format!("test AUC {a:.4} on {} cells ({} positive)\n", result.n_test, result.n_test_positives),
        None => format!("test AUC undefined: {} cells, all one class\n", result.n_test),
    };
    write_text(out, SUMMARY_TEXT_FILE, &text)?;
    print!("{text}");
    art.outputs.extend([TEST_SCORES_FILE, RESULTS_FILE, SUMMARY_JSON_FILE, SUMMARY_TEXT_FILE].map(String::from));
    Ok(())
}

fn evaluate_protocol(cfg: &RunConfig, data: &Data, out: &Path, art: &mut Artifacts) -> Result<()> {
    let problem = Problem::new(&data.y, &data.u, &data.v)?;
    let output = run_protocol(&problem, &cfg.plan, &cfg.hyper)?;
    let summary = summarize(&output.rows);
    write_csv(out, RESULTS_FILE, &output.rows)?;
    write_csv(out, TIMINGS_FILE, &output.timings)?;
    write_json(out, SUMMARY_JSON_FILE, &summary)?;
    let mut text = String::new();
    for s in &summary {
        let auc = s.mean_auc.map_or_else(|| "undefined".to_string(), |a| format!("{a:.4}"));
        text.push_str(&format!(
            "{:<15} rho {:<6} mean AUC {auc} over {} runs ({} flagged)\n",
            s.method.to_string(),
            s.rho,
            s.runs - s.flagged,
            s.flagged
        ));
    }
    write_text(out, SUMMARY_TEXT_FILE, &text)?;
    print!("{text}");
    let flagged = output.rows.iter().filter(|r| !r.flag.is_empty()).count();
    if flagged > 0 {
        log::warn!("{flagged} runs flagged; see {RESULTS_FILE}");
    }
    art.outputs.extend([RESULTS_FILE, TIMINGS_FILE, SUMMARY_JSON_FILE, SUMMARY_TEXT_FILE].map(String::from));
    Ok(())
}

pub fn grid(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<()> {
    let data = load_data(&cfg.data, art)?;
    let problem = Problem::new(&data.y, &data.u, &data.v)?;
    let outcome = grid_search(&problem, &cfg.plan, &cfg.hyper)?;
    write_csv(out, GRID_FILE, &outcome.table)?;
    write_json(out, BEST_FILE, &outcome.best)?;
    let best_auc = outcome
        .table
        .iter()
        .find(|r| r.lambda0 == outcome.best.lambda0_a && r.eta == outcome.best.eta && r.r == outcome.best.r)
        .and_then(|r| r.auc);
    let text = format!(
        "best of {} configurations: lambda0 {} eta {} r {} (validation AUC {})\n",
        outcome.table.len(),
        outcome.best.lambda0_a,
        outcome.best.eta,
        outcome.best.r,
        best_auc.map_or_else(|| "undefined".into(), |a| format!("{a:.4}"))
    );
    write_text(out, SUMMARY_TEXT_FILE, &text)?;
    print!("{text}");
    art.outputs.extend([GRID_FILE, BEST_FILE, SUMMARY_TEXT_FILE].map(String::from));
    Ok(())
}

pub fn xi(cfg: &RunConfig, out: &Path, art: &mut Artifacts) -> Result<()> {
    let data = load_data(&cfg.data, art)?;
    let problem = Problem::new(&data.y, &data.u, &data.v)?;
    let rows = xi_sweep(&problem, &cfg.plan, &cfg.hyper, &cfg.xi_grid)?;
    if rows.iter().all(|r| r.auc.is_none()) {
        return Err(anyhow!("every xi value failed: {}", rows.iter().map(|r| r.flag.as_str()).collect::<Vec<_>>().join("; ")));
    }
    write_csv(out, XI_FILE, &rows)?;
    let mut text = String::new();
    for r in &rows {
        let auc = r.auc.map_or_else(|| format!("undefined ({})", r.flag), |a| format!("{a:.4}"));
        text.push_str(&format!("xi {:<8} AUC {auc}\n", r.xi));
    }
    write_text(out, SUMMARY_TEXT_FILE, &text)?;
    print!("{text}");
    art.outputs.extend([XI_FILE, SUMMARY_TEXT_FILE].map(String::from));
    Ok(())
}
