use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use fedxgb_core::bench::{self, ScalingGrid};
use fedxgb_core::config::RunConfig;
use fedxgb_core::data;
use fedxgb_core::metrics;
use fedxgb_core::model;
use fedxgb_core::oracle;
use fedxgb_core::party::FeatureTable;
use fedxgb_core::run;
use fedxgb_core::share::PartyId;

const LOG_ENV: &str = "FEDXGB_LOG";

#[derive(Parser)]
#[command(name = "fedxgb", version, about = "Vertically federated XGBoost over additive secret sharing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a federated model; writes per-party models, predictions and a report.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, short, default_value = "fedxgb-out")]
        out: PathBuf,
    },
    /// Predict with saved per-party models.
    Predict {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding party-<m>.json files.
        #[arg(long)]
        models: PathBuf,
        /// Predictions CSV to write.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Metrics of a predictions CSV (columns probability and label).
    Eval {
        predictions: PathBuf,
    },
    /// Operation-count benchmarks.
    Bench {
        #[arg(long, short, default_value = "fedxgb-bench")]
        out: PathBuf,
        /// Smaller sweep grid.
        #[arg(long)]
        quick: bool,
        /// Skip the scaling sweeps, only the argmax cost table.
        #[arg(long)]
        table_only: bool,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Train the plaintext reference booster on the same data.
    Oracle {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short, default_value = "fedxgb-oracle")]
        out: PathBuf,
    },
    /// Run a training session and audit its transcripts.
    Audit {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the audit report here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// CSV data file (overrides dataset.path).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    parties: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Restrict every root split to P1's features.
    #[arg(long)]
    first_layer_mask: Option<bool>,
    /// in_process or tcp.
    #[arg(long)]
    backend: Option<String>,
    /// Any field as dotted.path=json, e.g. --set params.tie_tolerance=1e-9.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => bail!("'{path}': '{}' is not an object", parts[..i].join(".")),
        };
        if i + 1 == parts.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut doc = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => serde_json::json!({}),
        };
        let mut overrides: Vec<(&str, Value)> = Vec::new();
        if let Some(v) = &self.data {
            overrides.push(("dataset.path", Value::String(v.display().to_string())));
        }
        if let Some(v) = &self.label {
            overrides.push(("dataset.label", Value::String(v.clone())));
        }
        if let Some(v) = self.parties {
            overrides.push(("session.parties", v.into()));
        }
        if let Some(v) = self.seed {
            overrides.push(("session.seed", v.into()));
        }
        if let Some(v) = self.trees {
            overrides.push(("params.trees", v.into()));
        }
        if let Some(v) = self.depth {
            overrides.push(("params.max_depth", v.into()));
        }
        if let Some(v) = self.buckets {
            overrides.push(("params.buckets", v.into()));
        }
        if let Some(v) = self.lambda {
            overrides.push(("params.lambda", v.into()));
        }
        if let Some(v) = self.gamma {
            overrides.push(("params.gamma", v.into()));
        }
        if let Some(v) = self.first_layer_mask {
            overrides.push(("params.first_layer_mask", v.into()));
        }
        if let Some(v) = &self.backend {
            overrides.push(("session.backend", Value::String(v.clone())));
        }
        for (path, v) in overrides {
            set_path(&mut doc, path, v)?;
        }
        for s in &self.set {
            let (path, raw) = s.split_once('=').with_context(|| format!("--set '{s}' is not PATH=VALUE"))?;
            let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, path, v)?;
        }
        // a party count without a plan gets an even split
        if self.parties.is_some() && doc.pointer("/dataset/partition").is_none() {
            let n = self.parties.unwrap_or(0);
            set_path(&mut doc, "dataset.partition", serde_json::json!({ "fractions": vec![1.0; n] }))?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn write_predictions(path: &Path, scores: &[f64], probs: &[f64], labels: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    if labels.is_empty() {
        w.write_record(["row", "score", "probability"])?;
    } else {
        w.write_record(["row", "score", "probability", "label"])?;
    }
    for i in 0..scores.len() {
        let mut rec = vec![i.to_string(), scores[i].to_string(), probs[i].to_string()];
        if let Some(y) = labels.get(i) {
            rec.push(y.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let r = run::train(cfg)?;
    let models = out.join("models");
    model::save_all(&models, &r.models)?;
    let probs = run::output_values(&r.eval_scores, cfg.params.loss);
    write_predictions(&out.join("predictions.csv"), &r.eval_scores, &probs, &r.eval_labels)?;
    write_json(&out.join("report.json"), &r.report)?;
    write_json(&out.join("config.json"), cfg)?;
    if let Some(m) = &r.report.metrics {
        let auc = m.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into());
        println!("ACC {:.4}  F1 {:.4}  AUC {auc}", m.acc, m.f1);
    }
    if let Some(o) = &r.report.oracle {
        println!("oracle: structure {}, max |diff| {:.3e}", if o.structure_match { "matches" } else { "DIFFERS" }, o.max_abs_diff);
    }
    if let Some(a) = &r.report.audit {
        println!("audit: {} messages, {} violations", a.messages, a.violations.len());
    }
    println!("MULs: {} in training, {} in prediction", r.report.train_muls.total, r.report.predict_muls.total);
    println!("wrote {}", out.display());
    Ok(())
}

fn predict(cfg: &RunConfig, models_dir: &Path, out: &Path) -> Result<()> {
    let models = model::load_all(models_dir)?;
    let mut session = cfg.session_config();
    session.parties = models.len();
    let ds = match &cfg.dataset.path {
        Some(p) => {
            let has_label = csv::Reader::from_path(p)?.headers()?.iter().any(|h| h.trim() == cfg.dataset.label);
            data::read_table(p, has_label.then_some(cfg.dataset.label.as_str()), &cfg.dataset.categorical)?
        }
        None => run::load_dataset(&cfg.dataset, cfg.session.seed)?,
    };
    let (scores, _) = run::predict_models(&models, &ds, &session, cfg.params.predict_mode)?;
    let probs = run::output_values(&scores, models[0].loss);
    write_predictions(out, &scores, &probs, &ds.labels)?;
    println!("wrote {} predictions to {}", scores.len(), out.display());
    Ok(())
}

fn eval(path: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).with_context(|| format!("no '{name}' column"));
    let (pi, li) = (col("probability")?, col("label")?);
    let (mut probs, mut labels) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        probs.push(rec[pi].parse::<f64>()?);
        labels.push(rec[li].parse::<f64>()?);
    }
    let m = metrics::evaluate(&probs, &labels)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn bench(out: &Path, quick: bool, table_only: bool, seed: u64) -> Result<()> {
    fs::create_dir_all(out)?;
    let rows = bench::argmax_cost_table(true, seed)?;
    let text = bench::argmax_cost_text(&rows);
    print!("{text}");
    write_json(&out.join("argmax_cost.json"), &rows)?;
    fs::write(out.join("argmax_cost.txt"), &text)?;
    if table_only {
        return Ok(());
    }
    let grid = if quick {
        ScalingGrid {
            trees: vec![1, 2],
            depths: vec![2, 3],
            features: vec![4, 8],
            rows: vec![100, 200],
            base_features: 4,
            base_rows: 200,
            seed,
            ..Default::default()
        }
    } else {
        ScalingGrid { seed, ..Default::default() }
    };
    let report = bench::scaling(&grid)?;
    let text = bench::scaling_text(&report);
    print!("\n{text}");
    write_json(&out.join("scaling.json"), &report)?;
    fs::write(out.join("scaling.txt"), &text)?;
    if report.checks.iter().any(|c| !c.pass) {
        bail!("scaling checks failed");
    }
    Ok(())
}

fn oracle_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let prep = run::prepare(cfg)?;
    let counts: Vec<usize> = prep.partition.features.iter().map(|f| f.len()).collect();
    let table = FeatureTable::sequential(&counts);
    let global: Vec<usize> = prep.partition.features.iter().flatten().copied().collect();
    let columns: Vec<Vec<f64>> = global.iter().map(|&f| prep.train.columns[f].clone()).collect();
    let owners: Vec<PartyId> = table.owners.clone();
    let r = oracle::oracle_train(&columns, &owners, &prep.train.labels, &cfg.params)?;
    let eval = if prep.test.rows() > 0 { &prep.test } else { &prep.train };
    let eval_cols: Vec<Vec<f64>> = global.iter().map(|&f| eval.columns[f].clone()).collect();
    let scores = r.model.predict(&eval_cols, eval.rows());
    let probs = run::output_values(&scores, cfg.params.loss);
    write_predictions(&out.join("predictions.csv"), &scores, &probs, &eval.labels)?;
    let names: Vec<&String> = global.iter().map(|&f| &prep.train.names[f]).collect();
    write_json(&out.join("trees.json"), &serde_json::json!({ "features": names, "trees": r.model.trees }))?;
    let (m, rmse) = run::score_report(&scores, &eval.labels, cfg.params.loss)?;
    write_json(&out.join("metrics.json"), &serde_json::json!({ "metrics": m, "rmse": rmse }))?;
    if let Some(m) = m {
        println!("ACC {:.4}  F1 {:.4}  AUC {}", m.acc, m.f1, m.auc.map(|a| format!("{a:.4}")).unwrap_or("n/a".into()));
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn audit_cmd(mut cfg: RunConfig, out: Option<&Path>) -> Result<bool> {
    cfg.audit = true;
    cfg.oracle_check = false;
    let r = run::train(&cfg)?;
    let a = r.report.audit.context("audit missing from report")?;
    let restored: Vec<String> = a.restoration_set().iter().map(|k| k.to_string()).collect();
    let doc = serde_json::json!({ "report": a, "restored": restored });
    match out {
        Some(p) => write_json(p, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    eprintln!("{} messages, {} violations; restored: {}", a.messages, a.violations.len(), restored.join(", "));
    Ok(a.ok())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Train { cfg, out } => cfg.load().and_then(|c| train(&c, &out)),
        Cmd::Predict { cfg, models, out } => cfg.load().and_then(|c| predict(&c, &models, &out)),
        Cmd::Eval { predictions } => eval(&predictions),
        Cmd::Bench { out, quick, table_only, seed } => bench(&out, quick, table_only, seed),
        Cmd::Oracle { cfg, out } => cfg.load().and_then(|c| oracle_cmd(&c, &out)),
        Cmd::Audit { cfg, out } => match cfg.load().and_then(|c| audit_cmd(c, out.as_deref())) {
            Ok(true) => Ok(()),
            Ok(false) => Err(anyhow::anyhow!("audit found violations")),
            Err(e) => Err(e),
        },
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
