//! Cooperative inference over partial trees.
//!
//! Each party marks the leaves its own splits allow (both sides of a Dummy
//! node), shares that indicator, and the parties multiply all indicators and
//! the leaf weight shares together. Only P1 receives the per-instance sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::Party;
use crate::share::{MulPhase, PartyId, ShareVector};
use crate::transport::{slot, Tag};
use crate::tree_build::{LocalData, PartialEnsemble, TreeNode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    /// All instances of a tree in one `N × U` product: `M` MULs per tree.
    #[default]
    Batched,
    /// One product chain per instance: `M·N` MULs per tree.
    PerInstance,
}

/// 0/1 flag per leaf (left to right) for one instance.
pub fn local_indicator(tree: &TreeNode, row: &dyn Fn(usize) -> f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(tree.leaf_count());
    fn walk(n: &TreeNode, live: bool, row: &dyn Fn(usize) -> f64, out: &mut Vec<f64>) -> Result<()> {
        match n {
            TreeNode::Leaf { .. } => out.push(if live { 1.0 } else { 0.0 }),
            TreeNode::Dummy { left, right } => {
                walk(left, live, row, out)?;
                walk(right, live, row, out)?;
            }
            TreeNode::Split { local_feature, threshold, left, right, .. } => {
                let x = row(*local_feature);
                if x.is_nan() || threshold.is_nan() {
                    return Err(Error::Structure(format!("cannot route value {x} at threshold {threshold}")));
                }
                let go_left = x <= *threshold;
                walk(left, live && go_left, row, out)?;
                walk(right, live && !go_left, row, out)?;
            }
        }
        Ok(())
    }
    walk(tree, true, row, &mut out)?;
    Ok(out)
}

/// `N × U` indicator matrix, row-major.
pub fn indicator_matrix(tree: &TreeNode, data: &LocalData) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.rows * tree.leaf_count());
    for i in 0..data.rows {
        let cols = &data.columns;
        let row = |j: usize| cols.get(j).map(|c| c[i]).unwrap_or(f64::NAN);
        out.extend(local_indicator(tree, &row)?);
    }
    Ok(out)
}

/// Every party broadcasts its tree shapes; any disagreement is a structural
/// error on every party.
pub fn check_shapes(p: &mut Party, trees: &[&TreeNode]) -> Result<()> {
    let mut mine = vec![trees.len() as f64];
    for t in trees {
        let shape = t.shape();
        mine.push(shape.len() as f64);
        mine.extend(shape.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    }
    let mut mismatch = None;
    for m in 1..=p.parties {
        let from = PartyId::participant(m);
        let theirs = p.broadcast_from(from, (from == p.id).then(|| mine.clone()), Tag::SplitInfo, slot::NONE)?;
        if theirs != mine && mismatch.is_none() {
            mismatch = Some(from);
        }
    }
    match mismatch {
        Some(other) => Err(Error::Structure(format!("tree shapes of {} and {other} differ", p.id))),
        None => Ok(()),
    }
}

fn tile_rows(w: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(w.len() * n);
    for _ in 0..n {
        out.extend_from_slice(w);
    }
    out
}

/// Product of all parties' indicators with the weights; returns this
/// party's share of each instance's tree output.
fn product_shares(p: &mut Party, mine: &[f64], weights: &[f64], rows: usize) -> Result<ShareVector> {
    let len = mine.len();
    let mut acc: Option<ShareVector> = None;
    for m in 1..=p.parties {
        let owner = PartyId::participant(m);
        let s = p.share_from(owner, (owner == p.id).then_some(mine), len)?;
        acc = Some(match acc {
            None => s,
            Some(a) => p.mul(&a, &s, MulPhase::Predict)?,
        });
    }
    let w = ShareVector::new(p.id, tile_rows(weights, rows));
    let z = p.mul(&acc.expect("at least two parties"), &w, MulPhase::Predict)?;
    let u = weights.len();
    Ok(ShareVector::new(p.id, z.values.chunks_exact(u).map(|c| c.iter().sum()).collect()))
}

fn predict_tree_unchecked(p: &mut Party, tree: &TreeNode, data: &LocalData, mode: PredictMode) -> Result<ShareVector> {
    let u = tree.leaf_count();
    let ind = indicator_matrix(tree, data)?;
    let weights = tree.leaf_weights();
    match mode {
        PredictMode::Batched => product_shares(p, &ind, &weights, data.rows),
        PredictMode::PerInstance => {
            let mut out = Vec::with_capacity(data.rows);
            for i in 0..data.rows {
                out.push(product_shares(p, &ind[i * u..(i + 1) * u], &weights, 1)?.value());
            }
            Ok(ShareVector::new(p.id, out))
        }
    }
}

/// One tree's outputs for every instance, reconstructed on P1 only.
pub fn secure_predict_tree(p: &mut Party, tree: &TreeNode, data: &LocalData, mode: PredictMode) -> Result<Option<Vec<f64>>> {
    check_shapes(p, &[tree])?;
    let y = predict_tree_unchecked(p, tree, data, mode)?;
    p.restore_at(PartyId::ACTIVE, &y, Tag::PredictShare, slot::NONE)
}

/// Ensemble raw scores (sum over trees), reconstructed on P1 only.
pub fn secure_predict(p: &mut Party, ensemble: &PartialEnsemble, data: &LocalData, mode: PredictMode) -> Result<Option<Vec<f64>>> {
    let trees: Vec<&TreeNode> = ensemble.trees.iter().collect();
    check_shapes(p, &trees)?;
    let mut total = ShareVector::zeros(p.id, data.rows);
    for t in &trees {
        total = &total + &predict_tree_unchecked(p, t, data, mode)?;
    }
    p.restore_at(PartyId::ACTIVE, &total, Tag::PredictShare, slot::NONE)
}
