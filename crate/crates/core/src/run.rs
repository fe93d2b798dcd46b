//! End-to-end pipeline shared by the command line and the Python bindings.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audit::{self, AuditReport};
use crate::config::{DatasetSpec, RunConfig};
use crate::data::{self, Dataset, Partition};
use crate::error::{Error, Result};
use crate::federated;
use crate::metrics::{self, Metrics};
use crate::model::PartyModel;
use crate::oracle;
use crate::party::SessionConfig;
use crate::predict::PredictMode;
use crate::share::{MulCounter, PartyId};
use crate::tree_build::{sigmoid, LocalData, Loss, PartialEnsemble, TreeNode};

pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    match &spec.path {
        Some(p) => data::read_csv(p, &spec.label, &spec.categorical),
        None => {
            let s = &spec.synthetic;
            Ok(data::synthetic_classification(s.rows, s.features, s.seed.unwrap_or(seed)))
        }
    }
}

/// Normalized data cut into train and test rows, plus the feature partition.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub partition: Partition,
    pub scaling: Option<Vec<(f64, f64)>>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let mut ds = load_dataset(&cfg.dataset, cfg.session.seed)?;
    let scaling = cfg.dataset.normalize.then(|| ds.min_max());
    let partition = data::partition(&ds, &ds.headers, &cfg.dataset.partition)?;
    for (holder, f) in &partition.dropped_duplicates {
        log::info!("feature '{}' held by P{holder} is owned by another party; P{holder} drops it", ds.names[*f]);
    }
    let (train_idx, test_idx) = data::stratified_split(&ds.labels, cfg.dataset.test_fraction, cfg.session.seed);
    Ok(Prepared { train: ds.take_rows(&train_idx), test: ds.take_rows(&test_idx), partition, scaling })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    /// Every split (feature, bucket, threshold) and every tree shape agree.
    pub structure_match: bool,
    /// Largest per-instance raw score difference on the evaluation rows.
    pub max_abs_diff: f64,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub parties: usize,
    pub features: usize,
    pub train_rows: usize,
    pub eval_rows: usize,
    pub trees: usize,
    /// Classification metrics on the evaluation rows (test rows when there
    /// are any, otherwise the training rows).
    pub metrics: Option<Metrics>,
    pub rmse: Option<f64>,
    pub train_muls: MulCounter,
    pub predict_muls: MulCounter,
    pub wall_seconds: f64,
    pub oracle: Option<OracleComparison>,
    pub audit: Option<AuditReport>,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub models: Vec<PartyModel>,
    pub report: RunReport,
    /// Raw scores and labels of the evaluation rows.
    pub eval_scores: Vec<f64>,
    pub eval_labels: Vec<f64>,
}

pub fn output_values(scores: &[f64], loss: Loss) -> Vec<f64> {
    match loss {
        Loss::Logloss => scores.iter().map(|&s| sigmoid(s)).collect(),
        Loss::Mse => scores.to_vec(),
    }
}

pub fn score_report(scores: &[f64], labels: &[f64], loss: Loss) -> Result<(Option<Metrics>, Option<f64>)> {
    if labels.is_empty() {
        return Ok((None, None));
    }
    match loss {
        Loss::Logloss => Ok((Some(metrics::evaluate(&output_values(scores, loss), labels)?), None)),
        Loss::Mse => {
            let mse = scores.iter().zip(labels).map(|(s, y)| (s - y).powi(2)).sum::<f64>() / labels.len() as f64;
            Ok((None, Some(mse.sqrt())))
        }
    }
}

pub fn train(cfg: &RunConfig) -> Result<TrainRun> {
    cfg.validate()?;
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let session = cfg.session_config();
    let parts = data::split_vertical(&prep.train, &prep.partition)?;
    let out = federated::train(&session, &parts, &cfg.params)?;

    let models: Vec<PartyModel> = out
        .outputs
        .iter()
        .enumerate()
        .map(|(m, o)| {
            let feats = &prep.partition.features[m];
            PartyModel::new(
                PartyId::participant(m + 1),
                session.parties,
                session.session_id,
                cfg.params.loss,
                feats.iter().map(|&f| prep.train.names[f].clone()).collect(),
                prep.scaling.as_ref().map(|b| feats.iter().map(|&f| b[f]).collect()),
                &o.schema.table,
                &o.ensemble,
            )
        })
        .collect();
    let ensembles: Vec<PartialEnsemble> = out.outputs.iter().map(|o| o.ensemble.clone()).collect();

    let eval = if prep.test.rows() > 0 { &prep.test } else { &prep.train };
    let eval_parts = data::split_vertical(eval, &prep.partition)?;
    let mut predict_session = session.clone();
    predict_session.seed = session.seed.wrapping_add(1);
    let pred = federated::predict(&predict_session, &ensembles, &eval_parts, cfg.params.predict_mode)?;
    let eval_scores = pred.outputs[0].clone().ok_or_else(|| Error::Protocol("P1 did not receive predictions".into()))?;

    let oracle = if cfg.oracle_check {
        let views: Vec<_> = out.outputs.iter().map(|o| &o.schema.table).collect();
        let table = federated::merged_table(&views);
        let columns = federated::global_columns(&parts, &table);
        let run = oracle::oracle_train(&columns, &table.owners, &prep.train.labels, &cfg.params)?;
        let mut structure_match = run.model.trees.len() == ensembles[0].trees.len();
        for (t, otree) in run.model.trees.iter().enumerate() {
            let trees: Vec<&TreeNode> = out.outputs.iter().map(|o| &o.ensemble.trees[t]).collect();
            let ours = federated::merged_splits(&trees)?;
            structure_match &= trees[0].shape() == otree.shape() && ours == otree.splits();
        }
        let eval_columns = federated::global_columns(&eval_parts, &table);
        let expected = run.model.predict(&eval_columns, eval.rows());
        let max_abs_diff = expected.iter().zip(&eval_scores).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Some(OracleComparison { structure_match, max_abs_diff, rows: eval.rows() })
    } else {
        None
    };
    let audit = cfg.audit.then(|| audit::audit(&out.transcripts, &out.coordinator_transcript));
    let (metrics, rmse) = score_report(&eval_scores, &eval.labels, cfg.params.loss)?;
    let report = RunReport {
        parties: session.parties,
        features: prep.train.names.len(),
        train_rows: prep.train.rows(),
        eval_rows: eval.rows(),
        trees: cfg.params.trees,
        metrics,
        rmse,
        train_muls: out.counters[0].clone(),
        predict_muls: pred.counters[0].clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
        oracle,
        audit,
    };
    Ok(TrainRun { models, report, eval_scores, eval_labels: eval.labels.clone() })
}

/// Each party's columns, picked by the names stored in its model and
/// rescaled with its stored bounds. A one-hot level unseen in `ds` reads as 0.
pub fn local_parts(models: &[PartyModel], ds: &Dataset) -> Result<Vec<LocalData>> {
    let rows = ds.rows();
    models
        .iter()
        .map(|m| {
            let mut cols = Vec::with_capacity(m.features.len());
            for (i, name) in m.features.iter().enumerate() {
                let mut c = match ds.names.iter().position(|n| n == name) {
                    Some(j) => ds.columns[j].clone(),
                    None if name.contains('=') => vec![0.0; rows],
                    None => return Err(Error::Data(format!("column '{name}' needed by P{} is missing", m.party))),
                };
                if let Some(b) = &m.scaling {
                    let (lo, hi) = b[i];
                    for v in c.iter_mut() {
                        *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
                    }
                }
                cols.push(c);
            }
            LocalData::new(rows, cols, (m.party == 1 && !ds.labels.is_empty()).then(|| ds.labels.clone()))
        })
        .collect()
}

/// Raw scores of loaded models on `ds`, received by P1.
pub fn predict_models(
    models: &[PartyModel],
    ds: &Dataset,
    session: &SessionConfig,
    mode: PredictMode,
) -> Result<(Vec<f64>, MulCounter)> {
    if models.len() != session.parties {
        return Err(Error::Topology(format!("{} model files for {} parties", models.len(), session.parties)));
    }
    let parts = local_parts(models, ds)?;
    let ensembles: Vec<PartialEnsemble> = models.iter().map(|m| m.ensemble()).collect::<Result<_>>()?;
    let out = federated::predict(session, &ensembles, &parts, mode)?;
    let scores = out.outputs[0].clone().ok_or_else(|| Error::Protocol("P1 did not receive predictions".into()))?;
    Ok((scores, out.counters[0].clone()))
}
