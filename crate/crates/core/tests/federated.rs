use fedxgb_core::config::RunConfig;
use fedxgb_core::data::{partition, split_vertical, synthetic_classification, synthetic_regression, Dataset, PartitionPlan};
use fedxgb_core::div_newton;
use fedxgb_core::federated;
use fedxgb_core::leaf_weight::{self, LeafParams};
use fedxgb_core::model::{self, PartyModel};
use fedxgb_core::oracle;
use fedxgb_core::party::{run_session, SessionConfig};
use fedxgb_core::predict::PredictMode;
use fedxgb_core::run;
use fedxgb_core::share::{MulPhase, PartyId};
use fedxgb_core::transport::{slot, Tag};
use fedxgb_core::tree_build::{HyperParams, Loss, TreeNode};
use rand::{Rng, SeedableRng};

struct Comparison {
    structure_match: bool,
    max_diff: f64,
    root_owners: Vec<PartyId>,
}

fn compare(ds: &Dataset, fractions: Vec<f64>, params: &HyperParams, seed: u64) -> Comparison {
    let m = fractions.len();
    let part = partition(ds, &ds.headers, &PartitionPlan::Fractions(fractions)).unwrap();
    let parts = split_vertical(ds, &part).unwrap();
    let cfg = SessionConfig::new(m, seed);
    let out = federated::train(&cfg, &parts, params).unwrap();
    let views: Vec<_> = out.outputs.iter().map(|o| &o.schema.table).collect();
    let table = federated::merged_table(&views);
    let cols = federated::global_columns(&parts, &table);
    let orc = oracle::oracle_train(&cols, &table.owners, &ds.labels, params).unwrap();
    let mut structure_match = true;
    let mut root_owners = Vec::new();
    for (t, otree) in orc.model.trees.iter().enumerate() {
        let trees: Vec<&TreeNode> = out.outputs.iter().map(|o| &o.ensemble.trees[t]).collect();
        structure_match &= trees[0].shape() == otree.shape();
        structure_match &= federated::merged_splits(&trees).unwrap() == otree.splits();
        if let Some((f, _, _)) = otree.splits().first() {
            root_owners.push(table.owners[*f]);
        }
    }
    let ensembles: Vec<_> = out.outputs.iter().map(|o| o.ensemble.clone()).collect();
    let pred = federated::predict(&cfg, &ensembles, &parts, PredictMode::Batched).unwrap();
    let ours = pred.outputs[0].as_ref().unwrap();
    let theirs = orc.model.predict(&cols, ds.rows());
    let max_diff = ours.iter().zip(&theirs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Comparison { structure_match, max_diff, root_owners }
}

#[test]
fn lossless_across_party_counts_and_depths() {
    let cases: [(usize, usize, usize, usize); 4] = [(2, 3, 3, 500), (3, 2, 4, 800), (4, 3, 2, 2000), (4, 1, 3, 300)];
    for (i, &(m, t, d, n)) in cases.iter().enumerate() {
        let ds = synthetic_classification(n, 8, 100 + i as u64);
        let params = HyperParams { trees: t, max_depth: d, ..Default::default() };
        let c = compare(&ds, vec![1.0; m], &params, 7 + i as u64);
        assert!(c.structure_match, "case {i}: structure differs");
        assert!(c.max_diff <= 1e-6, "case {i}: max diff {}", c.max_diff);
    }
}

#[test]
fn lossless_for_squared_error() {
    let ds = synthetic_regression(400, 6, 5);
    let params = HyperParams { trees: 2, max_depth: 3, loss: Loss::Mse, ..Default::default() };
    let c = compare(&ds, vec![0.5, 0.5], &params, 3);
    assert!(c.structure_match);
    assert!(c.max_diff <= 1e-6, "{}", c.max_diff);
}

#[test]
fn first_layer_mask_keeps_roots_on_p1() {
    let ds = synthetic_classification(400, 8, 21);
    let params = HyperParams { trees: 3, max_depth: 3, first_layer_mask: true, ..Default::default() };
    let c = compare(&ds, vec![0.25, 0.25, 0.5], &params, 4);
    assert!(c.structure_match);
    assert!(c.max_diff <= 1e-6);
    assert_eq!(c.root_owners, vec![PartyId::ACTIVE; 3]);
}

#[test]
fn per_instance_and_batched_prediction_agree() {
    let ds = synthetic_classification(80, 4, 8);
    let part = partition(&ds, &ds.headers, &PartitionPlan::Fractions(vec![0.5, 0.5])).unwrap();
    let parts = split_vertical(&ds, &part).unwrap();
    let cfg = SessionConfig::new(2, 1);
    let params = HyperParams { trees: 2, max_depth: 2, ..Default::default() };
    let out = federated::train(&cfg, &parts, &params).unwrap();
    let ens: Vec<_> = out.outputs.iter().map(|o| o.ensemble.clone()).collect();
    let a = federated::predict(&cfg, &ens, &parts, PredictMode::Batched).unwrap();
    let b = federated::predict(&cfg, &ens, &parts, PredictMode::PerInstance).unwrap();
    let (ya, yb) = (a.outputs[0].as_ref().unwrap(), b.outputs[0].as_ref().unwrap());
    let diff = ya.iter().zip(yb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-7, "{diff}");
    // M MULs per tree, or M·N
    assert_eq!(a.counters[0].get(MulPhase::Predict), 2 * 2);
    assert_eq!(b.counters[0].get(MulPhase::Predict), 2 * 2 * 80);
    assert!(a.outputs[1].is_none());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let mut cfg = RunConfig::default();
    cfg.session.parties = 3;
    cfg.dataset.partition = PartitionPlan::Fractions(vec![0.3, 0.3, 0.4]);
    cfg.dataset.synthetic.rows = 300;
    cfg.params.trees = 2;
    let a = run::train(&cfg).unwrap();
    let b = run::train(&cfg).unwrap();
    assert_eq!(a.models, b.models);
    assert_eq!(a.eval_scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.eval_scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.report.train_muls, b.report.train_muls);
}

#[test]
fn saved_models_predict_bit_identically() {
    let mut cfg = RunConfig::default();
    cfg.session.parties = 3;
    cfg.dataset.partition = PartitionPlan::Fractions(vec![0.3, 0.3, 0.4]);
    cfg.dataset.synthetic.rows = 200;
    cfg.params.trees = 2;
    let r = run::train(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model::save_all(dir.path(), &r.models).unwrap();
    let loaded = model::load_all(dir.path()).unwrap();
    assert_eq!(loaded, r.models);
    let ds = run::load_dataset(&cfg.dataset, cfg.session.seed).unwrap();
    let session = cfg.session_config();
    let (a, _) = run::predict_models(&r.models, &ds, &session, PredictMode::Batched).unwrap();
    let (b, _) = run::predict_models(&loaded, &ds, &session, PredictMode::Batched).unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn model_files_reject_missing_party_and_foreign_session() {
    let mk = |seed| {
        let mut cfg = RunConfig::default();
        cfg.session.parties = 2;
        cfg.session.seed = seed;
        cfg.dataset.partition = PartitionPlan::Fractions(vec![0.5, 0.5]);
        cfg.dataset.synthetic.rows = 100;
        cfg.params.trees = 1;
        cfg.oracle_check = false;
        run::train(&cfg).unwrap().models
    };
    let (a, b) = (mk(1), mk(2));
    let dir = tempfile::tempdir().unwrap();
    model::save_all(dir.path(), &a[..1]).unwrap();
    let e = model::load_all(dir.path()).unwrap_err().to_string();
    assert!(e.contains("P2"), "{e}");
    let mixed: Vec<PartyModel> = vec![a[0].clone(), b[1].clone()];
    model::save_all(dir.path(), &mixed).unwrap();
    let e = model::load_all(dir.path()).unwrap_err().to_string();
    assert!(e.contains("topology hash mismatch"), "{e}");
}

#[test]
fn newton_leaf_weights_agree_with_descent() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..20).map(|_| rng.gen_range(0.5..40.0)).collect();
    let b: Vec<f64> = (0..20).map(|_| rng.gen_range(-30.0..30.0)).collect();
    let mut cfg = SessionConfig::new(3, 8);
    cfg.mask_range = 1.0;
    let params = LeafParams::default();
    let out = run_session(&cfg, |p| {
        let sa = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&a[..]), a.len())?;
        let sb = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&b[..]), b.len())?;
        let reg = &sa + &p.even(params.lambda, a.len());
        let mut descent = Vec::new();
        for i in 0..a.len() {
            let (w, _) = leaf_weight::secure_leaf_weight(p, &reg.slice(i, 1), &sb.slice(i, 1), &params)?;
            descent.push(w.value());
        }
        let newton = div_newton::newton_leaf_weight(p, &sa, &sb, params.lambda, 20)?;
        let d = p.restore_at(PartyId::ACTIVE, &fedxgb_core::ShareVector::new(p.id, descent), Tag::PredictShare, slot::NONE)?;
        let n = p.restore_at(PartyId::ACTIVE, &newton, Tag::PredictShare, slot::NONE)?;
        Ok(d.zip(n))
    })
    .unwrap();
    let (d, n) = out.outputs[0].clone().unwrap();
    for i in 0..a.len() {
        let exact = -b[i] / (a[i] + 1.0);
        assert!((d[i] - exact).abs() <= 1e-6, "descent {i}: {} vs {exact}", d[i]);
        assert!((n[i] - exact).abs() <= 1e-6, "newton {i}: {} vs {exact}", n[i]);
    }
}
