//! Operation-count benchmarks: the argmax cost comparison and scaling sweeps.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{partition, split_vertical, synthetic_classification, PartitionPlan};
use crate::div_newton::argmax_via_div_counter;
use crate::error::Result;
use crate::federated;
use crate::party::{run_session, SessionConfig};
use crate::predict::PredictMode;
use crate::share::{MulCounter, MulPhase, PartyId};
use crate::split_select::{self, ceil_log2, CandidateLayout, CandidateStats, CountingMode, SelectConfig};
use crate::tree_build::HyperParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxCostRow {
    pub j: u64,
    pub k: u64,
    pub division_free: u64,
    pub division_based: u64,
    /// MULs actually spent by a secure argmax over `J·K` random candidates.
    pub measured: Option<u64>,
}

pub const TABLE_CASES: [(u64, u64); 3] = [(16, 8), (16, 16), (32, 16)];

fn random_stats(p: &mut crate::party::Party, c: usize, seed: u64) -> Result<CandidateStats> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let plain: Vec<f64> = (0..4 * c)
        .map(|i| if i < 2 * c { rng.gen_range(0.0..50.0) } else { rng.gen_range(1.0..20.0) })
        .collect();
    let all = p.share_from(PartyId::ACTIVE, p.is_active().then_some(&plain[..]), 4 * c)?;
    Ok(CandidateStats { gl: all.slice(0, c), gr: all.slice(c, c), hl: all.slice(2 * c, c), hr: all.slice(3 * c, c) })
}

/// MULs spent by one secure argmax over `j` features of `k` candidates.
pub fn measure_argmax(j: usize, k: usize, mode: CountingMode, seed: u64) -> Result<u64> {
    let out = run_session(&SessionConfig::new(3, seed), |p| {
        let s = random_stats(p, j * k, seed)?;
        let layout = CandidateLayout::new(&(0..j).map(|g| (g, k)).collect::<Vec<_>>());
        let cfg = SelectConfig { mode, ..Default::default() };
        split_select::secure_argmax(p, &s, &layout, &cfg)?;
        Ok(p.counter.get(MulPhase::Argmax))
    })?;
    Ok(out.outputs[0])
}

/// MULs for one pairwise comparison and for one gain-sign test.
pub fn measure_unit_costs(seed: u64) -> Result<(u64, u64)> {
    let out = run_session(&SessionConfig::new(3, seed), |p| {
        let s = random_stats(p, 2, seed)?;
        let before = p.counter.clone();
        split_select::diff_numerator_denominator(p, &s, &[0], &[1])?;
        let cmp = p.counter.since(&before).total;
        let loss_n = p.even(4.0, 1);
        let loss_d = p.even(3.0, 1);
        let gamma = p.even(0.5, 1);
        let before = p.counter.clone();
        split_select::gain_fraction(p, &s, 0, &loss_n, &loss_d, &gamma)?;
        Ok((cmp, p.counter.since(&before).total))
    })?;
    Ok(out.outputs[0])
}

pub fn argmax_cost_table(measure: bool, seed: u64) -> Result<Vec<ArgmaxCostRow>> {
    TABLE_CASES
        .iter()
        .map(|&(j, k)| {
            let measured =
                if measure { Some(measure_argmax(j as usize, k as usize, CountingMode::Batched, seed)?) } else { None };
            Ok(ArgmaxCostRow {
                j,
                k,
                division_free: split_select::counter_formula(j, k),
                division_based: argmax_via_div_counter(j, k),
                measured,
            })
        })
        .collect()
}

pub fn argmax_cost_text(rows: &[ArgmaxCostRow]) -> String {
    let mut s = format!("{:>4} {:>4} {:>14} {:>15} {:>10}\n", "J", "K", "division-free", "division-based", "measured");
    for r in rows {
        let m = r.measured.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{:>4} {:>4} {:>14} {:>15} {:>10}", r.j, r.k, r.division_free, r.division_based, m);
    }
    s
}

/// `e(2^d−1)(2J + 9J⌈log₂K⌉ + 9⌈log₂J⌉ + 14) + MN(e−1)`.
pub fn training_formula(e: u64, d: u64, j: u64, k: u64, m: u64, n: u64) -> u64 {
    let per_node = 2 * j + 9 * j * ceil_log2(k) + 9 * ceil_log2(j) + 14;
    e * ((1 << d) - 1) * per_node + m * n * e.saturating_sub(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub trees: usize,
    pub depth: usize,
    pub features: usize,
    pub rows: usize,
    pub parties: usize,
    pub split_nodes: usize,
    pub complete: bool,
    /// Split-phase MULs per tree.
    pub per_tree_split: Vec<u64>,
    pub counter: MulCounter,
    /// Split-phase plus prediction MULs, comparable with the formula.
    pub formula_measured: u64,
    pub formula: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingGrid {
    pub trees: Vec<usize>,
    pub depths: Vec<usize>,
    pub features: Vec<usize>,
    pub rows: Vec<usize>,
    pub parties: usize,
    /// Held fixed on the axes not being swept.
    pub base_trees: usize,
    pub base_depth: usize,
    pub base_features: usize,
    pub base_rows: usize,
    pub buckets: usize,
    pub seed: u64,
}

impl Default for ScalingGrid {
    fn default() -> Self {
        ScalingGrid {
            trees: vec![1, 2, 3],
            depths: vec![2, 3, 4],
            features: vec![10, 50, 100],
            rows: vec![200, 400, 800],
            parties: 3,
            base_trees: 2,
            base_depth: 3,
            base_features: 10,
            base_rows: 400,
            buckets: 10,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub sweeps: Vec<(String, Vec<ScalingPoint>)>,
    pub checks: Vec<ScalingCheck>,
}

/// Train once in formula-compatible mode (batched argmax, per-instance
/// prediction, no split threshold) and collect the counts.
pub fn scaling_point(trees: usize, depth: usize, features: usize, rows: usize, parties: usize, buckets: usize, seed: u64) -> Result<ScalingPoint> {
    let ds = synthetic_classification(rows, features, seed);
    let part = partition(&ds, &ds.names, &PartitionPlan::Fractions(vec![1.0; parties]))?;
    let parts = split_vertical(&ds, &part)?;
    let params = HyperParams {
        trees,
        max_depth: depth,
        buckets,
        gamma: 0.0,
        tie_tolerance: 0.0,
        argmax_mode: CountingMode::Batched,
        predict_mode: PredictMode::PerInstance,
        ..Default::default()
    };
    let start = Instant::now();
    let out = federated::train(&SessionConfig::new(parties, seed), &parts, &params)?;
    let seconds = start.elapsed().as_secs_f64();
    let p1 = &out.outputs[0];
    let split_nodes: usize = p1.ensemble.trees.iter().map(|t| t.shape().iter().filter(|&&b| b).count()).sum();
    let complete = split_nodes == trees * ((1 << depth) - 1);
    let per_tree_split = p1.traces.iter().map(|tr| tr.iter().map(|n| n.muls.split_phase()).sum()).collect();
    let counter = out.counters[0].clone();
    let k_max = p1.schema.buckets.iter().copied().max().unwrap_or(0) as u64;
    Ok(ScalingPoint {
        trees,
        depth,
        features,
        rows,
        parties,
        split_nodes,
        complete,
        per_tree_split,
        formula_measured: counter.split_phase() + counter.get(MulPhase::Predict),
        formula: training_formula(trees as u64, depth as u64, features as u64, k_max, parties as u64, rows as u64),
        counter,
        seconds,
    })
}

pub fn scaling(grid: &ScalingGrid) -> Result<ScalingReport> {
    let g = grid;
    let point = |t, d, j, n| scaling_point(t, d, j, n, g.parties, g.buckets, g.seed);
    let by_t: Vec<ScalingPoint> = g.trees.iter().map(|&t| point(t, g.base_depth, g.base_features, g.base_rows)).collect::<Result<_>>()?;
    let by_d: Vec<ScalingPoint> = g.depths.iter().map(|&d| point(g.base_trees, d, g.base_features, g.base_rows)).collect::<Result<_>>()?;
    let by_j: Vec<ScalingPoint> = g.features.iter().map(|&j| point(g.base_trees, g.base_depth, j, g.base_rows)).collect::<Result<_>>()?;
    let by_n: Vec<ScalingPoint> = g.rows.iter().map(|&n| point(g.base_trees, g.base_depth, g.base_features, n)).collect::<Result<_>>()?;

    let mut checks = Vec::new();
    let per_tree: Vec<u64> = by_t.iter().flat_map(|p| p.per_tree_split.iter().copied()).collect();
    let (lo, hi) = (per_tree.iter().min().copied().unwrap_or(0), per_tree.iter().max().copied().unwrap_or(0));
    checks.push(ScalingCheck {
        name: "per-tree split-phase MULs constant across T".into(),
        pass: hi as f64 <= lo as f64 * 1.01,
        detail: format!("per-tree counts {per_tree:?}"),
    });
    let ratios: Vec<f64> = by_d
        .iter()
        .map(|p| p.counter.split_phase() as f64 / (p.trees as f64 * ((1u64 << p.depth) - 1) as f64))
        .collect();
    checks.push(ScalingCheck {
        name: "split-phase MULs proportional to 2^d - 1".into(),
        pass: by_d.iter().all(|p| p.complete) && ratios.windows(2).all(|w| w[0] == w[1]),
        detail: format!("per-node counts {ratios:?}, complete {:?}", by_d.iter().map(|p| p.complete).collect::<Vec<_>>()),
    });
    checks.push(ScalingCheck {
        name: "measured counts equal the training formula across J".into(),
        pass: by_j.iter().all(|p| p.complete && p.formula == p.formula_measured),
        detail: by_j
            .iter()
            .map(|p| format!("J={}: formula {} measured {}", p.features, p.formula, p.formula_measured))
            .collect::<Vec<_>>()
            .join("; "),
    });
    Ok(ScalingReport {
        sweeps: vec![("trees".into(), by_t), ("depth".into(), by_d), ("features".into(), by_j), ("rows".into(), by_n)],
        checks,
    })
}

pub fn scaling_text(r: &ScalingReport) -> String {
    let mut s = String::new();
    for (axis, points) in &r.sweeps {
        let _ = writeln!(s, "sweep over {axis}");
        let _ = writeln!(
            s,
            "{:>3} {:>3} {:>5} {:>6} {:>6} {:>10} {:>10} {:>10} {:>9}",
            "T", "d", "J", "N", "nodes", "split", "formula", "measured", "seconds"
        );
        for p in points {
            let _ = writeln!(
                s,
                "{:>3} {:>3} {:>5} {:>6} {:>6} {:>10} {:>10} {:>10} {:>9.3}",
                p.trees,
                p.depth,
                p.features,
                p.rows,
                p.split_nodes,
                p.counter.split_phase(),
                p.formula,
                p.formula_measured,
                p.seconds
            );
        }
        s.push('\n');
    }
    for c in &r.checks {
        let _ = writeln!(s, "[{}] {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    s
}
