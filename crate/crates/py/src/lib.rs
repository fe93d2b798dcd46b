use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fedxgb_core::config::RunConfig;
use fedxgb_core::party::{run_session, SessionConfig};
use fedxgb_core::share::{MulPhase, PartyId};
use fedxgb_core::transport::{slot, Tag};
use fedxgb_core::{bench, leaf_weight, metrics, model, run};

fn err(e: fedxgb_core::Error) -> PyErr {
    match e {
        fedxgb_core::Error::Config(_) | fedxgb_core::Error::Invalid(_) | fedxgb_core::Error::Data(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_config(config: &str) -> PyResult<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(config).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Train from a JSON config. Returns the run report as JSON; with `out_dir`
/// the per-party models are written there too.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None))]
fn train(py: Python<'_>, config: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = parse_config(config)?;
    let r = py.detach(|| run::train(&cfg)).map_err(err)?;
    if let Some(dir) = out_dir {
        model::save_all(&dir, &r.models).map_err(err)?;
    }
    serde_json::to_string(&r.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Raw scores of saved models on the config's dataset.
#[pyfunction]
fn predict(py: Python<'_>, config: &str, models_dir: PathBuf) -> PyResult<Vec<f64>> {
    let cfg = parse_config(config)?;
    py.detach(|| {
        let models = model::load_all(&models_dir)?;
        let ds = run::load_dataset(&cfg.dataset, cfg.session.seed)?;
        let mut session = cfg.session_config();
        session.parties = models.len();
        run::predict_models(&models, &ds, &session, cfg.params.predict_mode).map(|(s, _)| s)
    })
    .map_err(err)
}

/// `(acc, f1, auc)`; `auc` is None for a single-class label set.
#[pyfunction]
fn evaluate(probs: Vec<f64>, labels: Vec<f64>) -> PyResult<(f64, f64, Option<f64>)> {
    let m = metrics::evaluate(&probs, &labels).map_err(err)?;
    Ok((m.acc, m.f1, m.auc))
}

/// Rows `(J, K, division_free, division_based)`.
#[pyfunction]
fn argmax_cost_table() -> PyResult<Vec<(u64, u64, u64, u64)>> {
    let rows = bench::argmax_cost_table(false, 0).map_err(err)?;
    Ok(rows.iter().map(|r| (r.j, r.k, r.division_free, r.division_based)).collect())
}

#[pyfunction]
fn iteration_bound(v: f64, mu: f64, ratio: f64) -> PyResult<u32> {
    leaf_weight::iteration_bound(v, mu, ratio).map_err(err)
}

/// Elementwise product of two vectors computed on secret shares; P1 holds
/// `x`, P2 holds `y`. Returns `(product, mul_count)`.
#[pyfunction]
#[pyo3(signature = (x, y, parties=3, seed=0))]
fn secure_product(py: Python<'_>, x: Vec<f64>, y: Vec<f64>, parties: usize, seed: u64) -> PyResult<(Vec<f64>, u64)> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err("x and y differ in length"));
    }
    let out = py
        .detach(|| {
            run_session(&SessionConfig::new(parties, seed), |p| {
                let n = x.len();
                let a = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&x[..]), n)?;
                let b = p.share_from(PartyId::SECOND, (p.id == PartyId::SECOND).then_some(&y[..]), n)?;
                let z = p.mul(&a, &b, MulPhase::Other)?;
                let v = p.restore_at(PartyId::ACTIVE, &z, Tag::PredictShare, slot::NONE)?;
                Ok((v, p.counter.total))
            })
        })
        .map_err(err)?;
    let (v, count) = out.outputs.into_iter().next().expect("P1 output");
    Ok((v.unwrap_or_default(), count))
}

#[pymodule]
fn fedxgb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(argmax_cost_table, m)?)?;
    m.add_function(wrap_pyfunction!(iteration_bound, m)?)?;
    m.add_function(wrap_pyfunction!(secure_product, m)?)?;
    Ok(())
}
