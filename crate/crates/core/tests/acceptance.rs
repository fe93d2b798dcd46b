//! Acceptance gate: one line per criterion, non-zero exit if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fedxgb_core::audit::{self, Restoration};
use fedxgb_core::bench::{self, ScalingGrid};
use fedxgb_core::config::RunConfig;
use fedxgb_core::data::{partition, split_vertical, synthetic_classification, PartitionPlan};
use fedxgb_core::div_newton::{self, argmax_via_div_counter};
use fedxgb_core::federated;
use fedxgb_core::leaf_weight::{self, LeafParams};
use fedxgb_core::oracle;
use fedxgb_core::party::{run_session, Backend, SessionConfig};
use fedxgb_core::predict::PredictMode;
use fedxgb_core::run;
use fedxgb_core::share::{self, MulPhase, PartyId, ShareVector};
use fedxgb_core::split_select::{self, counter_formula, CandidateLayout, CandidateStats};
use fedxgb_core::transport::{slot, Tag};
use fedxgb_core::tree_build::{secure_train, HyperParams, TreeNode};
use fedxgb_core::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_lossless() -> Result<Outcome> {
    let start = Instant::now();
    let ds = synthetic_classification(500, 8, 2024);
    let part = partition(&ds, &ds.headers, &PartitionPlan::Fractions(vec![0.25, 0.375, 0.375]))?;
    let parts = split_vertical(&ds, &part)?;
    let params = HyperParams { trees: 3, max_depth: 3, buckets: 10, lambda: 1.0, gamma: 0.5, ..Default::default() };
    let cfg = SessionConfig::new(3, 2024);
    let out = federated::train(&cfg, &parts, &params)?;
    let views: Vec<_> = out.outputs.iter().map(|o| &o.schema.table).collect();
    let table = federated::merged_table(&views);
    let cols = federated::global_columns(&parts, &table);
    let orc = oracle::oracle_train(&cols, &table.owners, &ds.labels, &params)?;
    let mut structure = orc.model.trees.len() == 3;
    let mut splits = 0;
    for (t, otree) in orc.model.trees.iter().enumerate() {
        let trees: Vec<&TreeNode> = out.outputs.iter().map(|o| &o.ensemble.trees[t]).collect();
        let ours = federated::merged_splits(&trees)?;
        splits += ours.len();
        structure &= trees[0].shape() == otree.shape() && ours == otree.splits();
    }
    let ens: Vec<_> = out.outputs.iter().map(|o| o.ensemble.clone()).collect();
    let pred = federated::predict(&cfg, &ens, &parts, PredictMode::Batched)?;
    let ours = pred.outputs[0].clone().unwrap_or_default();
    let theirs = orc.model.predict(&cols, ds.rows());
    let diff = ours.iter().zip(&theirs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        structure && diff <= 1e-6 && ours.len() == 500 && secs <= 120.0,
        format!("{splits} splits identical: {structure}; max |y_fed - y_oracle| = {diff:.2e}; {secs:.1}s"),
    ))
}

fn c2_table() -> Result<Outcome> {
    let free: Vec<u64> = bench::TABLE_CASES.iter().map(|&(j, k)| counter_formula(j, k)).collect();
    let div: Vec<u64> = bench::TABLE_CASES.iter().map(|&(j, k)| argmax_via_div_counter(j, k)).collect();
    let (cmp, sign) = bench::measure_unit_costs(5)?;
    let measured: Vec<u64> = bench::argmax_cost_table(true, 5)?.iter().map(|r| r.measured.unwrap_or(0)).collect();
    let pass = free == [468, 612, 1197] && div == [10_496, 20_992, 41_984] && cmp == 9 && sign == 8 && measured == free;
    Ok(outcome(
        pass,
        format!("division-free {free:?}, division-based {div:?}, measured argmax {measured:?}, comparison {cmp}, gain-sign {sign}"),
    ))
}

fn c3_descent() -> Result<Outcome> {
    let b47 = leaf_weight::iteration_bound(1.0, 2.0, 1e-14)?;
    let b80 = leaf_weight::iteration_bound(1.5, 2.0, 1e-14)?;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let leaves: Vec<(f64, f64)> = (0..500)
        .map(|_| {
            let n = rng.gen_range(1..2000);
            let h: f64 = (0..n).map(|_| rng.gen_range(0.0..0.25)).sum();
            let g: f64 = (0..n).map(|_| rng.gen_range(-1.0..1.0)).sum();
            (h + 1.0, g)
        })
        .collect();
    let params = LeafParams::default();
    let out = run_session(&SessionConfig::new(3, 33), |p| {
        let a: Vec<f64> = leaves.iter().map(|l| l.0).collect();
        let b: Vec<f64> = leaves.iter().map(|l| l.1).collect();
        let sa = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&a[..]), a.len())?;
        let sb = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&b[..]), b.len())?;
        let mut w = Vec::new();
        let mut plans = Vec::new();
        for i in 0..a.len() {
            let (wi, plan) = leaf_weight::secure_leaf_weight(p, &sa.slice(i, 1), &sb.slice(i, 1), &params)?;
            w.push(wi.value());
            plans.push(plan);
        }
        let w = p.restore_at(PartyId::ACTIVE, &ShareVector::new(p.id, w), Tag::PredictShare, slot::NONE)?;
        Ok(w.map(|w| (w, plans)))
    })?;
    let (w, plans) = out.outputs[0].clone().unwrap_or_default();
    let (mut worst_err, mut over_bound) = (0.0f64, 0);
    for (i, &(a, b)) in leaves.iter().enumerate() {
        worst_err = worst_err.max((w[i] + b / a).abs());
        let needed = leaf_weight::iterations_to_eps(a, b, plans[i].eta, 1e-6);
        if needed > plans[i].t {
            over_bound += 1;
        }
    }
    let pass = b47 == 47 && b80 == 80 && w.len() == 500 && over_bound == 0 && worst_err <= 1e-6;
    Ok(outcome(
        pass,
        format!("bounds {b47}/{b80}; 500 leaves: {over_bound} exceed their bound, max |w + b/a| = {worst_err:.2e}"),
    ))
}

fn newton_sweep(mask_range: f64, seed: u64) -> Result<(f64, usize, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: Vec<f64> = (0..300).map(|_| 10f64.powf(rng.gen_range(-0.3..6.0))).collect();
    let mut cfg = SessionConfig::new(3, seed);
    cfg.mask_range = mask_range;
    let out = run_session(&cfg, |p| {
        let sd = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&d[..]), d.len())?;
        let num = p.public(&vec![1.0; d.len()]);
        let before = p.counter.clone();
        let q = div_newton::secure_divide(p, &num, &sd, div_newton::DEFAULT_ITERATIONS)?;
        let cost = p.counter.since(&before).get(MulPhase::Division);
        Ok((p.restore_at(PartyId::ACTIVE, &q, Tag::PredictShare, slot::NONE)?, cost))
    })?;
    let (q, cost) = out.outputs[0].clone();
    let q = q.unwrap_or_default();
    let rel: Vec<f64> = d.iter().zip(&q).map(|(d, q)| (q * d - 1.0).abs()).collect();
    let worst = rel.iter().copied().fold(0.0, f64::max);
    Ok((worst, rel.iter().filter(|&&r| r > 1e-6).count(), cost))
}

fn c4_newton() -> Result<Outcome> {
    let (worst, failing, cost) = newton_sweep(1.0, 44)?;
    let (worst_wide, failing_wide, _) = newton_sweep(share::DEFAULT_MASK_RANGE, 44)?;
    // start value property under the default mask distribution, M = 2..=20
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let mut outside = 0;
    let mut trials = 0;
    for m in 2..=20 {
        for _ in 0..200 {
            let d = rng.gen_range(0.5..1e6);
            let shares = share::shr(&[d], PartyId::ACTIVE, m, share::DEFAULT_MASK_RANGE, &mut rng)?;
            let mags: Vec<f64> = shares.iter().map(|s| div_newton::order_of_magnitude(s.values[0])).collect();
            let x0 = div_newton::initial_estimate(&mags).unwrap_or(f64::NAN);
            let dx = d * x0;
            trials += 1;
            if !(dx > 0.0 && dx < 2.0) {
                outside += 1;
            }
        }
    }
    // the same property through the message protocol
    let mut protocol_ok = true;
    for m in [2usize, 7, 20] {
        let d: Vec<f64> = (0..20).map(|_| rng.gen_range(0.5..1e6)).collect();
        let out = run_session(&SessionConfig::new(m, m as u64), |p| {
            let sd = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&d[..]), d.len())?;
            let st = div_newton::init_reciprocal(p, &sd)?;
            p.restore_at(PartyId::ACTIVE, &st.x, Tag::PredictShare, slot::NONE)
        })?;
        let x0 = out.outputs[0].clone().unwrap_or_default();
        protocol_ok &= d.iter().zip(&x0).all(|(d, x)| d * x > 0.0 && d * x < 2.0);
    }
    let pass = failing == 0 && worst <= 1e-6 && cost == 41 && outside == 0 && protocol_ok;
    Ok(outcome(
        pass,
        format!(
            "n=20, mask range 1: max rel err {worst:.2e}; division {cost} MULs; d*x0 outside (0,2) in {outside}/{trials} (M<=20), protocol {protocol_ok}; info: mask range 1e3 leaves {failing_wide}/300 above 1e-6 (max {worst_wide:.1e})"
        ),
    ))
}

fn c5_argmax() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    struct Node {
        k: Vec<usize>,
        g: Vec<Vec<f64>>,
        h: Vec<Vec<f64>>,
        g_sum: f64,
        h_sum: f64,
        gamma: f64,
    }
    let nodes: Vec<Node> = (0..1000)
        .map(|_| {
            let n = rng.gen_range(1..=32);
            let j = rng.gen_range(1..=8);
            let k: Vec<usize> = (0..j).map(|_| rng.gen_range(1..=8)).collect();
            let gi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.25)).collect();
            let mut g = Vec::new();
            let mut h = Vec::new();
            for &kj in &k {
                let (mut gb, mut hb) = (vec![0.0; kj], vec![0.0; kj]);
                for i in 0..n {
                    let b = rng.gen_range(0..kj);
                    gb[b] += gi[i];
                    hb[b] += hi[i];
                }
                g.push(gb);
                h.push(hb);
            }
            Node { k, g, h, g_sum: gi.iter().sum(), h_sum: hi.iter().sum(), gamma: rng.gen_range(0.0..0.5) }
        })
        .collect();
    let mut expected = Vec::new();
    for nd in &nodes {
        let params = HyperParams { gamma: nd.gamma, ..Default::default() };
        let features: Vec<usize> = (0..nd.k.len()).collect();
        expected.push(oracle::select(&features, &nd.g, &nd.h, nd.g_sum, nd.h_sum, &params)?);
    }
    let mut mismatched_argmax = 0;
    let mut mismatched_sign = 0;
    let mut positives = 0;
    for (chunk_i, chunk) in nodes.chunks(100).enumerate() {
        let out = run_session(&SessionConfig::new(3, 550 + chunk_i as u64), |p| {
            let mut got = Vec::new();
            for nd in chunk {
                let params = HyperParams { gamma: nd.gamma, ..Default::default() };
                let cfg = params.select_config();
                let mut plain = Vec::new();
                let (mut gl, mut gr, mut hl, mut hr) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for f in 0..nd.k.len() {
                    let (mut cg, mut ch) = (0.0, 0.0);
                    for b in 0..nd.k[f] {
                        cg += nd.g[f][b];
                        ch += nd.h[f][b];
                        gl.push(cg);
                        gr.push(nd.g_sum - cg);
                        hl.push(ch);
                        hr.push(nd.h_sum - ch);
                    }
                }
                let c = gl.len();
                for v in [&gl, &gr, &hl, &hr] {
                    plain.extend_from_slice(v);
                }
                plain.push(nd.g_sum);
                plain.push(nd.h_sum);
                let s = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&plain[..]), plain.len())?;
                let g_part = ShareVector::concat(&[&s.slice(0, 2 * c), &s.slice(4 * c, 1)])?;
                let squares = p.mul(&g_part, &g_part, MulPhase::CandidatePrep)?;
                let lam = p.even(params.lambda, c);
                let stats = CandidateStats {
                    gl: squares.slice(0, c),
                    gr: squares.slice(c, c),
                    hl: &s.slice(2 * c, c) + &lam,
                    hr: &s.slice(3 * c, c) + &lam,
                };
                let loss_n = squares.slice(2 * c, 1);
                let loss_d = &s.slice(4 * c + 1, 1) + &p.even(params.lambda, 1);
                let layout = CandidateLayout::new(&nd.k.iter().enumerate().map(|(f, &k)| (f, k)).collect::<Vec<_>>());
                let best = split_select::secure_argmax(p, &stats, &layout, &cfg)?;
                let gamma = p.even(params.gamma, 1);
                let sign = split_select::best_gain_sign(p, &stats, best, &loss_n, &loss_d, &gamma, &cfg)?;
                got.push((layout.locate(best), sign));
            }
            Ok(got)
        })?;
        for ((cand, sign), e) in out.outputs[0].iter().zip(&expected[chunk_i * 100..]) {
            if *cand != e.candidate {
                mismatched_argmax += 1;
            }
            if (*sign > 0) != e.positive {
                mismatched_sign += 1;
            }
            positives += e.positive as usize;
        }
    }
    Ok(outcome(
        mismatched_argmax == 0 && mismatched_sign == 0,
        format!("1000 nodes: {mismatched_argmax} argmax and {mismatched_sign} gain-sign disagreements ({positives} positive gains)"),
    ))
}

fn c6_audit() -> Result<Outcome> {
    let ds = synthetic_classification(300, 8, 66);
    let part = partition(&ds, &ds.headers, &PartitionPlan::Fractions(vec![0.25, 0.375, 0.375]))?;
    let parts = split_vertical(&ds, &part)?;
    let params = HyperParams { trees: 3, max_depth: 3, ..Default::default() };
    let out = federated::train(&SessionConfig::new(3, 66), &parts, &params)?;
    let r = audit::audit(&out.transcripts, &out.coordinator_transcript);
    let got = r.restoration_set();
    let want = Restoration::training_set();
    let names: Vec<String> = got.iter().map(|k| format!("{k} x{}", r.restorations[k])).collect();
    Ok(outcome(
        r.ok() && got == want,
        format!("{} messages, {} violations; restored {{{}}}", r.messages, r.violations.len(), names.join(", ")),
    ))
}

fn c7_mask() -> Result<Outcome> {
    let mut cfg = RunConfig::default();
    cfg.dataset.synthetic.rows = 1000;
    cfg.audit = false;
    cfg.oracle_check = false;
    let plain = run::train(&cfg)?;
    cfg.params.first_layer_mask = true;
    let masked = run::train(&cfg)?;
    let (mut roots_on_p1, mut split_roots) = (true, 0);
    for t in 0..cfg.params.trees {
        let trees: Vec<TreeNode> = masked.models.iter().map(|m| m.ensemble().map(|e| e.trees[t].clone())).collect::<Result<_>>()?;
        // a leaf root means no P1 feature had positive gain
        if trees.iter().all(|t| matches!(t, TreeNode::Leaf { .. })) {
            continue;
        }
        split_roots += 1;
        let p1_owns = matches!(trees[0], TreeNode::Split { .. });
        let others_dummy = trees[1..].iter().all(|t| matches!(t, TreeNode::Dummy { .. }));
        roots_on_p1 &= p1_owns && others_dummy;
    }
    roots_on_p1 &= split_roots > 0;
    let auc = |r: &run::TrainRun| r.report.metrics.and_then(|m| m.auc).unwrap_or(f64::NAN);
    let (a0, a1) = (auc(&plain), auc(&masked));
    Ok(outcome(
        roots_on_p1 && (a0 - a1).abs() <= 0.03,
        format!("{split_roots} root splits, all owned by P1: {roots_on_p1}; AUC unmasked {a0:.4}, masked {a1:.4}, delta {:.4}", (a0 - a1).abs()),
    ))
}

fn c8_scaling() -> Result<Outcome> {
    let r = bench::scaling(&ScalingGrid::default())?;
    let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let j: Vec<String> = r.sweeps[2].1.iter().map(|p| format!("J={} {}={}", p.features, p.formula, p.formula_measured)).collect();
    Ok(outcome(
        failed.is_empty(),
        format!("{} checks, failed {failed:?}; formula vs measured {}", r.checks.len(), j.join(", ")),
    ))
}

fn c9_primitives() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checks = 0;
    let mut failures = 0;
    let mut check = |ok: bool| {
        checks += 1;
        if !ok {
            failures += 1;
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    for i in 0..2000 {
        let m = 2 + i % 5;
        let x: f64 = rng.gen_range(-1e3..1e3);
        let y: f64 = rng.gen_range(-1e3..1e3);
        let z: f64 = rng.gen_range(-1e3..1e3);
        let sx = share::shr(&[x], PartyId::ACTIVE, m, 1e3, &mut rng)?;
        let sy = share::shr(&[y], PartyId::ACTIVE, m, 1e3, &mut rng)?;
        let sz = share::shr(&[z], PartyId::ACTIVE, m, 1e3, &mut rng)?;
        let rec = |v: Vec<ShareVector>| share::reconstruct(&v).map(|r| r[0]);
        // grid values reconstruct exactly
        let q = (x / share::MASK_QUANTUM).round() * share::MASK_QUANTUM;
        check(rec(share::shr(&[q], PartyId::ACTIVE, m, 1e3, &mut rng)?)? == q);
        check(close(rec(sx.clone())?, x));
        let ab = rec((0..m).map(|i| &sx[i] + &sy[i]).collect())?;
        let ba = rec((0..m).map(|i| &sy[i] + &sx[i]).collect())?;
        check(close(ab, ba) && close(ab, x + y));
        let l = rec((0..m).map(|i| &(&sx[i] + &sy[i]) + &sz[i]).collect())?;
        let r = rec((0..m).map(|i| &sx[i] + &(&sy[i] + &sz[i])).collect())?;
        check(close(l, r));
        let k = rng.gen_range(-3.0..3.0);
        let dl = rec((0..m).map(|i| (&sx[i] + &sy[i]).scale(k)).collect())?;
        let dr = rec((0..m).map(|i| &sx[i].scale(k) + &sy[i].scale(k)).collect())?;
        check(close(dl, dr));
    }
    // Beaver MUL through the message protocol
    let xs: Vec<f64> = (0..2000).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let ys: Vec<f64> = (0..2000).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let out = run_session(&SessionConfig::new(3, 99), |p| {
        let a = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&xs[..]), xs.len())?;
        let b = p.share_from(PartyId::SECOND, (p.id == PartyId::SECOND).then_some(&ys[..]), ys.len())?;
        let mut z = Vec::new();
        for i in 0..xs.len() {
            z.push(p.mul(&a.slice(i, 1), &b.slice(i, 1), MulPhase::Other)?.value());
        }
        p.restore_at(PartyId::ACTIVE, &ShareVector::new(p.id, z), Tag::PredictShare, slot::NONE)
    })?;
    let z = out.outputs[0].clone().unwrap_or_default();
    for i in 0..xs.len() {
        check(z.get(i).is_some_and(|&v| close(v, xs[i] * ys[i])));
    }

    // backends
    let ds = synthetic_classification(60, 4, 9);
    let part = partition(&ds, &ds.headers, &PartitionPlan::Fractions(vec![0.5, 0.25, 0.25]))?;
    let parts = split_vertical(&ds, &part)?;
    let params = HyperParams { trees: 2, max_depth: 2, ..Default::default() };
    let run_with = |backend| {
        let mut cfg = SessionConfig::new(3, 909);
        cfg.backend = backend;
        cfg.triple_batch = 1024;
        run_session(&cfg, |p| secure_train(p, &parts[p.id.slot()], &params).map(|o| o.ensemble))
    };
    let a = run_with(Backend::InProcess)?;
    let b = run_with(Backend::Tcp)?;
    let same = a.outputs == b.outputs && a.transcripts.iter().zip(&b.transcripts).all(|(x, y)| x.bit_eq(y));
    let msgs: usize = a.transcripts.iter().map(|t| t.len()).sum();
    Ok(outcome(
        failures == 0 && checks >= 10_000 && same,
        format!("{checks} randomized checks, {failures} failures; TCP and in-process transcripts identical: {same} ({msgs} entries)"),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("losslessness against the plaintext oracle", c1_lossless),
        ("argmax cost table and unit MUL costs", c2_table),
        ("leaf descent iteration bounds", c3_descent),
        ("Newton reciprocal accuracy and cost", c4_newton),
        ("secure argmax and gain sign equal the oracle", c5_argmax),
        ("semi-honest transcript audit", c6_audit),
        ("first-layer mask", c7_mask),
        ("operation-count scaling", c8_scaling),
        ("secret-sharing primitive properties", c9_primitives),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {}. {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
