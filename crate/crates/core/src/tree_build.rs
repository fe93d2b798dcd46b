//! Secure training: per-tree fit, recursive node building and bucket
//! aggregation.
//!
//! Every participant runs [`secure_train`] with its own columns; P1 also holds
//! the labels. Recursion order is left before right on every party, so the
//! protocol rounds stay aligned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leaf_weight::{self, LeafParams, StepMode};
use crate::party::{FeatureTable, Party};
use crate::predict::{self, PredictMode};
use crate::share::{MulCounter, MulPhase, PartyId, ShareVector};
use crate::split_select::{self, CandidateLayout, CandidateStats, CountingMode, SelectConfig};
use crate::transport::{slot, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Logloss,
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub trees: usize,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub buckets: usize,
    pub mu: f64,
    pub eps: f64,
    pub first_layer_mask: bool,
    pub loss: Loss,
    /// Gain differences at or below this are ties; gains at or below it are
    /// treated as non-positive.
    pub tie_tolerance: f64,
    /// Assumed lower bound of `aε/|b|` for the leaf iteration count.
    pub ratio_floor: f64,
    pub argmax_mode: CountingMode,
    pub predict_mode: PredictMode,
    pub leaf_mode: StepMode,
    /// Keep per-node indicator shares in the build trace.
    pub trace_indicators: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            trees: 3,
            max_depth: 3,
            lambda: 1.0,
            gamma: 0.5,
            buckets: 10,
            mu: 2.0,
            eps: 1e-6,
            first_layer_mask: false,
            loss: Loss::Logloss,
            tie_tolerance: 1e-6,
            ratio_floor: leaf_weight::DEFAULT_RATIO_FLOOR,
            argmax_mode: CountingMode::Batched,
            predict_mode: PredictMode::Batched,
            leaf_mode: StepMode::Perturbed,
            trace_indicators: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.buckets < 1 {
            return Err(Error::Config("buckets must be at least 1".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.mu > 1.0) {
            return Err(Error::Config(format!("mu must exceed 1, got {}", self.mu)));
        }
        if !(self.eps > 0.0) || !(self.ratio_floor > 0.0) || !(self.tie_tolerance >= 0.0) {
            return Err(Error::Config("eps, ratio_floor and tie_tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn select_config(&self) -> SelectConfig {
        SelectConfig { mode: self.argmax_mode, tolerance: self.tie_tolerance, zero_band: split_select::ZERO_BAND }
    }

    pub fn leaf_params(&self) -> LeafParams {
        LeafParams { lambda: self.lambda, mu: self.mu, ratio_floor: self.ratio_floor, mode: self.leaf_mode }
    }
}

/// One party's view of a tree node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        local_feature: usize,
        bucket: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Dummy {
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl TreeNode {
    pub fn children(&self) -> Option<(&TreeNode, &TreeNode)> {
        match self {
            TreeNode::Split { left, right, .. } | TreeNode::Dummy { left, right } => Some((left, right)),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self.children() {
            Some((l, r)) => l.leaf_count() + r.leaf_count(),
            None => 1,
        }
    }

    pub fn node_count(&self) -> usize {
        match self.children() {
            Some((l, r)) => 1 + l.node_count() + r.node_count(),
            None => 1,
        }
    }

    /// Preorder arity pattern: `true` for internal nodes.
    pub fn shape(&self) -> Vec<bool> {
        let mut out = Vec::new();
        fn walk(n: &TreeNode, out: &mut Vec<bool>) {
            match n.children() {
                Some((l, r)) => {
                    out.push(true);
                    walk(l, out);
                    walk(r, out);
                }
                None => out.push(false),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Leaf weight shares, left to right.
    pub fn leaf_weights(&self) -> Vec<f64> {
        let mut out = Vec::new();
        fn walk(n: &TreeNode, out: &mut Vec<f64>) {
            match n {
                TreeNode::Leaf { weight } => out.push(*weight),
                _ => {
                    let (l, r) = n.children().unwrap();
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Splits owned by this party in preorder: `(feature, bucket, threshold)`.
    pub fn splits(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        fn walk(n: &TreeNode, out: &mut Vec<(usize, usize, f64)>) {
            if let TreeNode::Split { feature, bucket, threshold, .. } = n {
                out.push((*feature, *bucket, *threshold));
            }
            if let Some((l, r)) = n.children() {
                walk(l, out);
                walk(r, out);
            }
        }
        walk(self, &mut out);
        out
    }
}

/// A party's trees, one per boosting round.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialEnsemble {
    pub owner: Option<PartyId>,
    pub trees: Vec<TreeNode>,
}

/// A party's columns (in its own local order) and, on P1, the labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalData {
    pub rows: usize,
    pub columns: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
}

impl LocalData {
    pub fn new(rows: usize, columns: Vec<Vec<f64>>, labels: Option<Vec<f64>>) -> Result<LocalData> {
        if columns.iter().any(|c| c.len() != rows) || labels.as_ref().is_some_and(|l| l.len() != rows) {
            return Err(Error::Data("columns and labels must have equal length".into()));
        }
        Ok(LocalData { rows, columns, labels })
    }

    /// Subset of rows, in the given order.
    pub fn take_rows(&self, idx: &[usize]) -> LocalData {
        LocalData {
            rows: idx.len(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Equal-frequency thresholds from the full column: the `⌈kN/K⌉`-th order
/// statistic for `k = 1..K`, deduplicated.
pub fn quantile_thresholds(column: &[f64], k: usize) -> Vec<f64> {
    let n = column.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut q: Vec<f64> = (1..=k).map(|i| sorted[(i * n).div_ceil(k) - 1]).collect();
    q.dedup();
    q
}

/// Bucket `k` holds `Q[k−1] < x ≤ Q[k]`.
pub fn bucket_of(x: f64, thresholds: &[f64]) -> usize {
    thresholds.partition_point(|&q| q < x).min(thresholds.len().saturating_sub(1))
}

/// Public per-feature information every party knows after setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub table: FeatureTable,
    /// Effective bucket count per global feature id.
    pub buckets: Vec<usize>,
}

impl FeatureSchema {
    pub fn features(&self) -> usize {
        self.table.len()
    }

    pub fn owned_by(&self, party: PartyId) -> Vec<usize> {
        (0..self.features()).filter(|&g| self.table.owners[g] == party).collect()
    }
}

/// Setup state: schema, the owner's thresholds and everyone's shares of the
/// one-hot bucket masks.
pub struct TrainSetup {
    pub schema: FeatureSchema,
    /// Thresholds per local feature (own columns only).
    pub thresholds: Vec<Vec<f64>>,
    /// Bucket index per local feature and row.
    pub bins: Vec<Vec<usize>>,
    /// Share of the `N × K_j` one-hot bucket matrix, per global feature id.
    pub masks: Vec<ShareVector>,
}

/// Feature handshake, bucket-count announcement and mask sharing.
pub fn secure_setup(p: &mut Party, data: &LocalData, params: &HyperParams) -> Result<TrainSetup> {
    let table = p.exchange_features(data.columns.len())?;
    let thresholds: Vec<Vec<f64>> = data.columns.iter().map(|c| quantile_thresholds(c, params.buckets)).collect();
    let bins: Vec<Vec<usize>> = data
        .columns
        .iter()
        .zip(&thresholds)
        .map(|(c, q)| c.iter().map(|&x| bucket_of(x, q)).collect())
        .collect();
    let mut buckets = vec![0usize; table.len()];
    for m in 1..=p.parties {
        let owner = PartyId::participant(m);
        // announced in ascending global id, which every party can enumerate
        let owned: Vec<usize> = (0..table.len()).filter(|&g| table.owners[g] == owner).collect();
        let mine = (owner == p.id).then(|| owned.iter().map(|&g| thresholds[table.local_index[g]].len() as f64).collect());
        let counts = p.broadcast_from(owner, mine, Tag::SplitInfo, slot::NONE)?;
        if counts.len() != owned.len() {
            return Err(Error::Protocol(format!("{owner} announced {} features, table has {}", counts.len(), owned.len())));
        }
        for (&g, &k) in owned.iter().zip(&counts) {
            buckets[g] = k as usize;
        }
    }
    let n = data.rows;
    let mut masks = Vec::with_capacity(table.len());
    for g in 0..table.len() {
        let owner = table.owners[g];
        let k = buckets[g];
        let plain = (owner == p.id).then(|| {
            let b = &bins[table.local_index[g]];
            let mut m = vec![0.0; n * k];
            for (i, &bi) in b.iter().enumerate() {
                m[i * k + bi] = 1.0;
            }
            m
        });
        masks.push(p.share_from(owner, plain.as_deref(), n * k)?);
    }
    Ok(TrainSetup { schema: FeatureSchema { table, buckets }, thresholds, bins, masks })
}

/// First- and second-order gradients on P1.
pub fn compute_gradients(y: &[f64], yhat: &[f64], loss: Loss) -> (Vec<f64>, Vec<f64>) {
    match loss {
        Loss::Logloss => y
            .iter()
            .zip(yhat)
            .map(|(&y, &f)| {
                let p = sigmoid(f);
                (p - y, p * (1.0 - p))
            })
            .unzip(),
        Loss::Mse => y.iter().zip(yhat).map(|(&y, &f)| (f - y, 1.0)).unzip(),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bucket sums of one node.
#[derive(Clone, Debug)]
pub struct AggregatedStats {
    /// Candidate features in ascending global id.
    pub features: Vec<usize>,
    /// `G[j][k]` share per candidate feature.
    pub g: Vec<ShareVector>,
    pub h: Vec<ShareVector>,
}

fn tile(x: &ShareVector, k: usize) -> ShareVector {
    ShareVector::new(x.owner, x.values.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect())
}

fn column_sums(x: &ShareVector, k: usize) -> ShareVector {
    let mut out = vec![0.0; k];
    for row in x.values.chunks_exact(k) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    ShareVector::new(x.owner, out)
}

/// Two vector MULs per candidate feature: `g` and `h` against the shared
/// one-hot bucket matrix, followed by local column sums.
pub fn secure_agg_bucket(
    p: &mut Party,
    g: &ShareVector,
    h: &ShareVector,
    setup: &TrainSetup,
    features: &[usize],
) -> Result<AggregatedStats> {
    let mut gs = Vec::with_capacity(features.len());
    let mut hs = Vec::with_capacity(features.len());
    for &f in features {
        let k = setup.schema.buckets[f];
        let mask = &setup.masks[f];
        let pg = p.mul(&tile(g, k), mask, MulPhase::BucketAgg)?;
        let ph = p.mul(&tile(h, k), mask, MulPhase::BucketAgg)?;
        gs.push(column_sums(&pg, k));
        hs.push(column_sums(&ph, k));
    }
    Ok(AggregatedStats { features: features.to_vec(), g: gs, h: hs })
}

fn prefix(x: &ShareVector) -> ShareVector {
    let mut acc = 0.0;
    ShareVector::new(x.owner, x.values.iter().map(|v| {
        acc += v;
        acc
    }).collect())
}

/// Per-node record kept for reports and tests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeTrace {
    pub depth: usize,
    /// Preorder position inside the tree.
    pub position: usize,
    /// `(feature, bucket)` chosen by the argmax, if the node ran one.
    pub candidate: Option<(usize, usize)>,
    pub gain_sign: Option<i8>,
    pub split: bool,
    /// MULs spent on this node before recursing.
    pub muls: MulCounter,
    #[serde(skip)]
    pub indicator: Option<ShareVector>,
    #[serde(skip)]
    pub children: Option<(ShareVector, ShareVector)>,
    #[serde(skip)]
    pub leaf_terms: Option<(ShareVector, ShareVector)>,
}

struct NodeShares {
    g: ShareVector,
    h: ShareVector,
    s: ShareVector,
}

struct Builder<'a> {
    params: &'a HyperParams,
    data: &'a LocalData,
    setup: &'a TrainSetup,
    trace: Vec<NodeTrace>,
}

impl Builder<'_> {
    fn build(&mut self, p: &mut Party, node: NodeShares, depth: usize) -> Result<TreeNode> {
        let start = p.counter.clone();
        let position = self.trace.len();
        self.trace.push(NodeTrace {
            depth,
            position,
            candidate: None,
            gain_sign: None,
            split: false,
            muls: MulCounter::default(),
            indicator: self.params.trace_indicators.then(|| node.s.clone()),
            children: None,
            leaf_terms: None,
        });
        let g_sum = node.g.sum();
        let h_sum = node.h.sum();
        let lambda = p.even(self.params.lambda, 1);
        let loss_d = &h_sum + &lambda;

        if depth < self.params.max_depth {
            let features = if depth == 0 && self.params.first_layer_mask {
                self.setup.schema.owned_by(PartyId::ACTIVE)
            } else {
                (0..self.setup.schema.features()).collect()
            };
            let agg = secure_agg_bucket(p, &node.g, &node.h, self.setup, &features)?;
            let layout = CandidateLayout::new(
                &features.iter().map(|&f| (f, self.setup.schema.buckets[f])).collect::<Vec<_>>(),
            );
            let gl = ShareVector::concat(&agg.g.iter().map(prefix).collect::<Vec<_>>().iter().collect::<Vec<_>>())?;
            let hl = ShareVector::concat(&agg.h.iter().map(prefix).collect::<Vec<_>>().iter().collect::<Vec<_>>())?;
            let c = gl.len();
            let gr = &ShareVector::new(p.id, vec![g_sum.value(); c]) - &gl;
            let hr = &ShareVector::new(p.id, vec![h_sum.value(); c]) - &hl;
            let lam = p.even(self.params.lambda, c);
            let squares = p.mul(
                &ShareVector::concat(&[&gl, &gr, &g_sum])?,
                &ShareVector::concat(&[&gl, &gr, &g_sum])?,
                MulPhase::CandidatePrep,
            )?;
            let stats = CandidateStats {
                gl: squares.slice(0, c),
                gr: squares.slice(c, c),
                hl: &hl + &lam,
                hr: &hr + &lam,
            };
            let loss_n = squares.slice(2 * c, 1);
            let cfg = self.params.select_config();
            let best = split_select::secure_argmax(p, &stats, &layout, &cfg)?;
            let gamma = p.even(self.params.gamma, 1);
            let sign = split_select::best_gain_sign(p, &stats, best, &loss_n, &loss_d, &gamma, &cfg)?;
            let (feature, bucket) = layout.locate(best);
            self.trace[position].candidate = Some((feature, bucket));
            self.trace[position].gain_sign = Some(sign);
            if sign > 0 {
                return self.split(p, node, depth, position, feature, bucket, start);
            }
        }
        let (w, _plan) = leaf_weight::secure_leaf_weight(p, &loss_d, &g_sum, &self.params.leaf_params())?;
        let t = &mut self.trace[position];
        t.muls = p.counter.since(&start);
        if self.params.trace_indicators {
            t.leaf_terms = Some((loss_d, g_sum));
        }
        Ok(TreeNode::Leaf { weight: w.value() })
    }

    #[allow(clippy::too_many_arguments)]
    fn split(
        &mut self,
        p: &mut Party,
        node: NodeShares,
        depth: usize,
        position: usize,
        feature: usize,
        bucket: usize,
        start: MulCounter,
    ) -> Result<TreeNode> {
        let table = &self.setup.schema.table;
        let owner = table.owners[feature];
        let n = self.data.rows;
        let mut threshold = f64::NAN;
        let (left_plain, right_plain) = if owner == p.id {
            let local = table.local_index[feature];
            threshold = self.setup.thresholds[local][bucket];
            let col = &self.data.columns[local];
            let l: Vec<f64> = col.iter().map(|&x| if x <= threshold { 1.0 } else { 0.0 }).collect();
            let r: Vec<f64> = l.iter().map(|v| 1.0 - v).collect();
            (Some(l), Some(r))
        } else {
            (None, None)
        };
        let sl = p.share_from(owner, left_plain.as_deref(), n)?;
        let sr = p.share_from(owner, right_plain.as_deref(), n)?;
        let ph = MulPhase::ChildPrep;
        let sl = p.mul(&sl, &node.s, ph)?;
        let sr = p.mul(&sr, &node.s, ph)?;
        let gl = p.mul(&node.g, &sl, ph)?;
        let gr = p.mul(&node.g, &sr, ph)?;
        let hl = p.mul(&node.h, &sl, ph)?;
        let hr = p.mul(&node.h, &sr, ph)?;
        {
            let t = &mut self.trace[position];
            t.split = true;
            t.muls = p.counter.since(&start);
            if self.params.trace_indicators {
                t.children = Some((sl.clone(), sr.clone()));
            }
        }
        let left = self.build(p, NodeShares { g: gl, h: hl, s: sl }, depth + 1)?;
        let right = self.build(p, NodeShares { g: gr, h: hr, s: sr }, depth + 1)?;
        let (left, right) = (Box::new(left), Box::new(right));
        Ok(if owner == p.id {
            TreeNode::Split { feature, local_feature: table.local_index[feature], bucket, threshold, left, right }
        } else {
            TreeNode::Dummy { left, right }
        })
    }
}

/// Output of one fitted tree on one party.
pub struct FitOutput {
    pub tree: TreeNode,
    pub trace: Vec<NodeTrace>,
}

/// Fit one tree. P1 supplies `grad = Some((g, h))`.
pub fn secure_fit(
    p: &mut Party,
    data: &LocalData,
    setup: &TrainSetup,
    grad: Option<(&[f64], &[f64])>,
    params: &HyperParams,
) -> Result<FitOutput> {
    let n = data.rows;
    let ones = p.is_active().then(|| vec![1.0; n]);
    let g = p.share_from(PartyId::ACTIVE, grad.map(|x| x.0), n)?;
    let h = p.share_from(PartyId::ACTIVE, grad.map(|x| x.1), n)?;
    let s = p.share_from(PartyId::ACTIVE, ones.as_deref(), n)?;
    let mut b = Builder { params, data, setup, trace: Vec::new() };
    let tree = b.build(p, NodeShares { g, h, s }, 0)?;
    Ok(FitOutput { tree, trace: b.trace })
}

/// Everything one party holds after training.
pub struct TrainOutput {
    pub ensemble: PartialEnsemble,
    pub schema: FeatureSchema,
    /// P1 only: raw scores after the last in-training update.
    pub scores: Option<Vec<f64>>,
    /// P1 only: gradients used for each tree.
    pub gradients: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub traces: Vec<Vec<NodeTrace>>,
    pub setup: TrainSetup,
}

/// Train `params.trees` trees. Scores are updated on P1 after every tree but
/// the last.
pub fn secure_train(p: &mut Party, data: &LocalData, params: &HyperParams) -> Result<TrainOutput> {
    params.validate()?;
    if p.is_active() && data.labels.is_none() {
        return Err(Error::Data("the active participant must hold the labels".into()));
    }
    let setup = secure_setup(p, data, params)?;
    if params.first_layer_mask && setup.schema.owned_by(PartyId::ACTIVE).is_empty() {
        return Err(Error::Config("first-layer mask needs at least one feature on P1".into()));
    }
    let mut scores = p.is_active().then(|| vec![0.0; data.rows]);
    let mut gradients = p.is_active().then(Vec::new);
    let mut ensemble = PartialEnsemble { owner: Some(p.id), trees: Vec::new() };
    let mut traces = Vec::new();
    for t in 0..params.trees {
        let grad = match (&scores, &data.labels) {
            (Some(s), Some(y)) => Some(compute_gradients(y, s, params.loss)),
            _ => None,
        };
        let fit = secure_fit(p, data, &setup, grad.as_ref().map(|(g, h)| (g.as_slice(), h.as_slice())), params)?;
        if let (Some(all), Some(gh)) = (gradients.as_mut(), grad) {
            all.push(gh);
        }
        if t + 1 < params.trees {
            let update = predict::secure_predict_tree(p, &fit.tree, data, params.predict_mode)?;
            if let (Some(s), Some(u)) = (scores.as_mut(), update) {
                s.iter_mut().zip(&u).for_each(|(s, u)| *s += u);
            }
        }
        ensemble.trees.push(fit.tree);
        traces.push(fit.trace);
    }
    Ok(TrainOutput { ensemble, schema: setup.schema.clone(), scores, gradients, traces, setup })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_frequency_six_by_three() {
        let col = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let q = quantile_thresholds(&col, 3);
        assert_eq!(q, vec![2.0, 4.0, 6.0]);
        let mut counts = [0; 3];
        for x in col {
            counts[bucket_of(x, &q)] += 1;
        }
        assert_eq!(counts, [2, 2, 2]);
    }

    #[test]
    fn quantiles_dedupe_repeated_values() {
        let q = quantile_thresholds(&[1.0, 1.0, 1.0, 1.0, 2.0], 4);
        assert_eq!(q, vec![1.0, 2.0]);
        assert_eq!(bucket_of(1.0, &q), 0);
        assert_eq!(bucket_of(1.5, &q), 1);
    }

    #[test]
    fn boundary_value_goes_to_its_bucket() {
        let q = [2.0, 4.0, 6.0];
        assert_eq!(bucket_of(2.0, &q), 0);
        assert_eq!(bucket_of(2.000001, &q), 1);
        assert_eq!(bucket_of(-5.0, &q), 0);
    }

    #[test]
    fn gradient_examples() {
        let (g, h) = compute_gradients(&[1.0], &[0.0], Loss::Logloss);
        assert_eq!((g[0], h[0]), (-0.5, 0.25));
        let (g, h) = compute_gradients(&[5.0], &[2.0], Loss::Mse);
        assert_eq!((g[0], h[0]), (-3.0, 1.0));
    }

    #[test]
    fn logloss_gradients_match_finite_differences() {
        let loss = |y: f64, f: f64| -(y * sigmoid(f).ln() + (1.0 - y) * (1.0 - sigmoid(f)).ln());
        let step = 1e-5;
        for &(y, f) in &[(1.0, 0.3), (0.0, -1.2), (1.0, 2.5), (0.0, 0.0)] {
            let (g, h) = compute_gradients(&[y], &[f], Loss::Logloss);
            let fd_g = (loss(y, f + step) - loss(y, f - step)) / (2.0 * step);
            let fd_h = (loss(y, f + step) - 2.0 * loss(y, f) + loss(y, f - step)) / (step * step);
            assert!((g[0] - fd_g).abs() < 1e-6);
            assert!((h[0] - fd_h).abs() < 1e-4);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = HyperParams { lambda: 0.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }
}
