//! Driver helpers: run training or prediction for all parties of a session
//! and reassemble plaintext views for testing.

use crate::error::{Error, Result};
use crate::party::{run_session, FeatureTable, SessionConfig, SessionOutput};
use crate::predict::{self, PredictMode};
use crate::share::{self, PartyId};
use crate::tree_build::{self, HyperParams, LocalData, PartialEnsemble, TrainOutput, TreeNode};

pub fn train(cfg: &SessionConfig, parts: &[LocalData], params: &HyperParams) -> Result<SessionOutput<TrainOutput>> {
    check_parts(cfg, parts)?;
    run_session(cfg, |p| tree_build::secure_train(p, &parts[p.id.slot()], params))
}

/// Ensemble raw scores on P1 (index 0 of the outputs).
pub fn predict(
    cfg: &SessionConfig,
    ensembles: &[PartialEnsemble],
    parts: &[LocalData],
    mode: PredictMode,
) -> Result<SessionOutput<Option<Vec<f64>>>> {
    check_parts(cfg, parts)?;
    if ensembles.len() != parts.len() {
        return Err(Error::Topology(format!("{} models for {} parties", ensembles.len(), parts.len())));
    }
    run_session(cfg, |p| predict::secure_predict(p, &ensembles[p.id.slot()], &parts[p.id.slot()], mode))
}

fn check_parts(cfg: &SessionConfig, parts: &[LocalData]) -> Result<()> {
    if parts.len() != cfg.parties {
        return Err(Error::Topology(format!("{} data parts for {} parties", parts.len(), cfg.parties)));
    }
    if let Some(first) = parts.first() {
        if parts.iter().any(|p| p.rows != first.rows) {
            return Err(Error::Data("instance sets are not aligned".into()));
        }
    }
    Ok(())
}

/// Plaintext columns in global feature id order. `table` must carry every
/// owner's local indices (see [`merged_table`]).
pub fn global_columns(parts: &[LocalData], table: &FeatureTable) -> Vec<Vec<f64>> {
    (0..table.len()).map(|g| parts[table.owners[g].slot()].columns[table.local_index[g]].clone()).collect()
}

/// The full table as issued (each party's view carries only its own local
/// indices; merge them).
pub fn merged_table(views: &[&FeatureTable]) -> FeatureTable {
    let mut t = views[0].clone();
    for v in views {
        for g in 0..t.len() {
            if v.local_index[g] != usize::MAX {
                t.local_index[g] = v.local_index[g];
            }
        }
    }
    t
}

/// Merge all parties' partial trees into `(feature, bucket, threshold)` per
/// split position in preorder. Errors if shapes differ or a position is
/// owned by zero or several parties.
pub fn merged_splits(trees: &[&TreeNode]) -> Result<Vec<(usize, usize, f64)>> {
    let shape = trees[0].shape();
    if trees.iter().any(|t| t.shape() != shape) {
        return Err(Error::Structure("partial tree shapes differ".into()));
    }
    let mut out = Vec::new();
    fn walk(nodes: &[&TreeNode], out: &mut Vec<(usize, usize, f64)>) -> Result<()> {
        if nodes[0].children().is_none() {
            return Ok(());
        }
        let owners: Vec<&TreeNode> = nodes.iter().copied().filter(|n| matches!(n, TreeNode::Split { .. })).collect();
        if owners.len() != 1 {
            return Err(Error::Structure(format!("split position held by {} parties", owners.len())));
        }
        if let TreeNode::Split { feature, bucket, threshold, .. } = owners[0] {
            out.push((*feature, *bucket, *threshold));
        }
        let lefts: Vec<&TreeNode> = nodes.iter().map(|n| n.children().unwrap().0).collect();
        let rights: Vec<&TreeNode> = nodes.iter().map(|n| n.children().unwrap().1).collect();
        walk(&lefts, out)?;
        walk(&rights, out)
    }
    walk(trees, &mut out)?;
    Ok(out)
}

/// Reconstruct leaf weights of one tree from all parties' shares.
pub fn reconstructed_weights(trees: &[&TreeNode]) -> Result<Vec<f64>> {
    let shares: Vec<share::ShareVector> = trees
        .iter()
        .enumerate()
        .map(|(m, t)| share::ShareVector::new(PartyId::participant(m + 1), t.leaf_weights()))
        .collect();
    share::reconstruct(&shares)
}
