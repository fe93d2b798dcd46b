//! Centralized plaintext booster with the same binning, candidate order, tie
//! rule and gain test as the federated protocol. Used as the reference in
//! tests and by the `oracle` subcommand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::share::PartyId;
use crate::split_select;
use crate::tree_build::{bucket_of, compute_gradients, quantile_thresholds, HyperParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleNode {
    Split {
        feature: usize,
        bucket: usize,
        threshold: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl OracleNode {
    pub fn predict(&self, row: &dyn Fn(usize) -> f64) -> f64 {
        match self {
            OracleNode::Leaf { weight } => *weight,
            OracleNode::Split { feature, threshold, left, right, .. } => {
                if row(*feature) <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    /// Leaf index (left to right) reached by `row`.
    pub fn leaf_index(&self, row: &dyn Fn(usize) -> f64) -> usize {
        fn walk(n: &OracleNode, row: &dyn Fn(usize) -> f64, offset: usize) -> usize {
            match n {
                OracleNode::Leaf { .. } => offset,
                OracleNode::Split { feature, threshold, left, right, .. } => {
                    if row(*feature) <= *threshold {
                        walk(left, row, offset)
                    } else {
                        walk(right, row, offset + left.leaf_count())
                    }
                }
            }
        }
        walk(self, row, 0)
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            OracleNode::Leaf { .. } => 1,
            OracleNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn shape(&self) -> Vec<bool> {
        let mut out = Vec::new();
        fn walk(n: &OracleNode, out: &mut Vec<bool>) {
            match n {
                OracleNode::Leaf { .. } => out.push(false),
                OracleNode::Split { left, right, .. } => {
                    out.push(true);
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// `(feature, bucket, threshold)` of every split in preorder.
    pub fn splits(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        fn walk(n: &OracleNode, out: &mut Vec<(usize, usize, f64)>) {
            if let OracleNode::Split { feature, bucket, threshold, left, right } = n {
                out.push((*feature, *bucket, *threshold));
                walk(left, out);
                walk(right, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn leaf_weights(&self) -> Vec<f64> {
        match self {
            OracleNode::Leaf { weight } => vec![*weight],
            OracleNode::Split { left, right, .. } => {
                let mut v = left.leaf_weights();
                v.extend(right.leaf_weights());
                v
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub trees: Vec<OracleNode>,
}

impl OracleModel {
    /// Raw scores; `columns` are indexed by global feature id.
    pub fn predict(&self, columns: &[Vec<f64>], rows: usize) -> Vec<f64> {
        (0..rows)
            .map(|i| {
                let row = |j: usize| columns[j][i];
                self.trees.iter().map(|t| t.predict(&row)).sum()
            })
            .collect()
    }
}

/// Per-candidate loss term `G_L²/(H_L+λ) + G_R²/(H_R+λ)` for one feature's
/// bucket sums, given the node totals.
pub fn candidate_losses(g: &[f64], h: &[f64], g_sum: f64, h_sum: f64, lambda: f64) -> Vec<f64> {
    let (mut gl, mut hl) = (0.0, 0.0);
    g.iter()
        .zip(h)
        .map(|(&gk, &hk)| {
            gl += gk;
            hl += hk;
            let (gr, hr) = (g_sum - gl, h_sum - hl);
            gl * gl / (hl + lambda) + gr * gr / (hr + lambda)
        })
        .collect()
}

/// Split gain of a candidate with loss term `l`.
pub fn gain(l: f64, g_sum: f64, h_sum: f64, lambda: f64, gamma: f64) -> f64 {
    0.5 * (l - g_sum * g_sum / (h_sum + lambda)) - gamma
}

/// Outcome of the plaintext selection at one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// `(feature, bucket)`
    pub candidate: (usize, usize),
    pub gain: f64,
    /// Whether the gain clears the tolerance.
    pub positive: bool,
}

/// Bracket selection over bucket sums `g[f]`, `h[f]` of the listed features
/// (ascending global id), mirroring the secure tournament.
pub fn select(
    features: &[usize],
    g: &[Vec<f64>],
    h: &[Vec<f64>],
    g_sum: f64,
    h_sum: f64,
    params: &HyperParams,
) -> Result<Selection> {
    let mut losses = Vec::new();
    let mut index = Vec::new();
    let mut ranges = Vec::new();
    for (i, &f) in features.iter().enumerate() {
        let l = candidate_losses(&g[i], &h[i], g_sum, h_sum, params.lambda);
        ranges.push((losses.len(), l.len()));
        index.extend((0..l.len()).map(|k| (f, k)));
        losses.extend(l);
    }
    if losses.is_empty() {
        return Err(Error::Invalid("no split candidates".into()));
    }
    let margin = 2.0 * params.tie_tolerance;
    let batched = params.argmax_mode == split_select::CountingMode::Batched;
    let wins = |pairs: &[(usize, usize)]| -> Result<Vec<bool>> {
        Ok(pairs.iter().map(|&(a, b)| losses[b] - losses[a] > margin).collect())
    };
    let mut champions = Vec::new();
    for &(start, n) in &ranges {
        champions.push(split_select::bracket(&(start..start + n).collect::<Vec<_>>(), batched, wins)?);
    }
    let best = split_select::bracket(&champions, batched, wins)?;
    let gn = gain(losses[best], g_sum, h_sum, params.lambda, params.gamma);
    Ok(Selection { candidate: index[best], gain: gn, positive: gn > params.tie_tolerance })
}

/// Record of one oracle node, in build order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleNodeRecord {
    pub depth: usize,
    pub instances: usize,
    pub selection: Option<Selection>,
    pub g_sum: f64,
    pub h_sum: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRun {
    pub model: OracleModel,
    /// Raw training scores after each tree.
    pub scores: Vec<Vec<f64>>,
    /// Gradients used for each tree.
    pub gradients: Vec<(Vec<f64>, Vec<f64>)>,
    pub nodes: Vec<Vec<OracleNodeRecord>>,
    pub thresholds: Vec<Vec<f64>>,
}

struct Ctx<'a> {
    columns: &'a [Vec<f64>],
    owners: &'a [PartyId],
    thresholds: &'a [Vec<f64>],
    bins: &'a [Vec<usize>],
    params: &'a HyperParams,
    records: Vec<OracleNodeRecord>,
}

impl Ctx<'_> {
    fn build(&mut self, rows: &[usize], g: &[f64], h: &[f64], depth: usize) -> Result<OracleNode> {
        let g_sum: f64 = rows.iter().map(|&i| g[i]).sum();
        let h_sum: f64 = rows.iter().map(|&i| h[i]).sum();
        let slot = self.records.len();
        self.records.push(OracleNodeRecord { depth, instances: rows.len(), selection: None, g_sum, h_sum });
        let leaf = OracleNode::Leaf { weight: -g_sum / (h_sum + self.params.lambda) };
        if depth >= self.params.max_depth {
            return Ok(leaf);
        }
        let features: Vec<usize> = (0..self.columns.len())
            .filter(|&f| !(depth == 0 && self.params.first_layer_mask) || self.owners[f] == PartyId::ACTIVE)
            .collect();
        let mut gb = Vec::with_capacity(features.len());
        let mut hb = Vec::with_capacity(features.len());
        for &f in &features {
            let k = self.thresholds[f].len();
            let (mut gk, mut hk) = (vec![0.0; k], vec![0.0; k]);
            for &i in rows {
                let b = self.bins[f][i];
                gk[b] += g[i];
                hk[b] += h[i];
            }
            gb.push(gk);
            hb.push(hk);
        }
        let sel = select(&features, &gb, &hb, g_sum, h_sum, self.params)?;
        self.records[slot].selection = Some(sel);
        if !sel.positive {
            return Ok(leaf);
        }
        let (f, k) = sel.candidate;
        let threshold = self.thresholds[f][k];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.columns[f][i] <= threshold);
        let left = Box::new(self.build(&l, g, h, depth + 1)?);
        let right = Box::new(self.build(&r, g, h, depth + 1)?);
        Ok(OracleNode::Split { feature: f, bucket: k, threshold, left, right })
    }
}

/// Train on the full plaintext matrix. `columns` and `owners` are indexed by
/// global feature id.
pub fn oracle_train(columns: &[Vec<f64>], owners: &[PartyId], y: &[f64], params: &HyperParams) -> Result<OracleRun> {
    params.validate()?;
    if columns.len() != owners.len() {
        return Err(Error::Shape { left: columns.len(), right: owners.len() });
    }
    if params.first_layer_mask && !owners.contains(&PartyId::ACTIVE) {
        return Err(Error::Config("first-layer mask needs at least one feature on P1".into()));
    }
    let n = y.len();
    let thresholds: Vec<Vec<f64>> = columns.iter().map(|c| quantile_thresholds(c, params.buckets)).collect();
    let bins: Vec<Vec<usize>> = columns
        .iter()
        .zip(&thresholds)
        .map(|(c, q)| c.iter().map(|&x| bucket_of(x, q)).collect())
        .collect();
    let mut ctx = Ctx { columns, owners, thresholds: &thresholds, bins: &bins, params, records: Vec::new() };
    let mut scores = vec![0.0; n];
    let mut run = OracleRun {
        model: OracleModel::default(),
        scores: Vec::new(),
        gradients: Vec::new(),
        nodes: Vec::new(),
        thresholds: Vec::new(),
    };
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..params.trees {
        let (g, h) = compute_gradients(y, &scores, params.loss);
        let tree = ctx.build(&all, &g, &h, 0)?;
        for (i, s) in scores.iter_mut().enumerate() {
            *s += tree.predict(&|j| columns[j][i]);
        }
        run.scores.push(scores.clone());
        run.gradients.push((g, h));
        run.nodes.push(std::mem::take(&mut ctx.records));
        run.model.trees.push(tree);
    }
    run.thresholds = thresholds;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> HyperParams {
        HyperParams { trees: 1, max_depth: 1, gamma: 0.0, ..Default::default() }
    }

    #[test]
    fn separable_single_feature_splits_at_boundary() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let p = HyperParams { buckets: 6, ..params() };
        let run = oracle_train(&x, &[PartyId(1)], &y, &p).unwrap();
        assert_eq!(run.model.trees[0].splits(), vec![(0, 2, 3.0)]);
        let w = run.model.trees[0].leaf_weights();
        // left: g = 0.5 each, h = 0.25 each
        assert!((w[0] - (-1.5 / 1.75)).abs() < 1e-12);
        assert!((w[1] - 1.5 / 1.75).abs() < 1e-12);
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let y = vec![1.0; 4];
        let p = HyperParams { gamma: 0.5, ..params() };
        let run = oracle_train(&x, &[PartyId(1)], &y, &p).unwrap();
        // every split of a constant-gradient node loses to the penalty
        match &run.model.trees[0] {
            OracleNode::Leaf { weight } => assert!((weight - 2.0 / 2.0).abs() < 1e-12),
            other => panic!("expected leaf, got {other:?}"),
        }
    }

    #[test]
    fn ties_keep_lowest_feature() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let run = oracle_train(&x, &[PartyId(1), PartyId(2)], &y, &HyperParams { buckets: 4, ..params() }).unwrap();
        assert_eq!(run.model.trees[0].splits()[0].0, 0);
    }

    #[test]
    fn first_layer_mask_restricts_root() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 1.0, 2.0]];
        let y = vec![1.0, 0.0, 0.0, 1.0];
        let owners = [PartyId(2), PartyId(1)];
        let p = HyperParams { buckets: 4, first_layer_mask: true, ..params() };
        let run = oracle_train(&x, &owners, &y, &p).unwrap();
        if let Some(&(f, _, _)) = run.model.trees[0].splits().first() {
            assert_eq!(owners[f], PartyId(1));
        }
    }
}
