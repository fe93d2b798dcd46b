//! Per-party model files.
//!
//! Each party stores its partial trees as preorder node arrays together with
//! a topology hash over the session id, the feature owner table and the tree
//! shapes. Every party of one session computes the same hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::party::FeatureTable;
use crate::share::PartyId;
use crate::tree_build::{Loss, PartialEnsemble, TreeNode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlatNode {
    Split { feature: usize, local_feature: usize, bucket: usize, threshold: f64 },
    Dummy,
    Leaf { weight: f64 },
}

pub fn flatten(tree: &TreeNode) -> Vec<FlatNode> {
    let mut out = Vec::with_capacity(tree.node_count());
    fn walk(n: &TreeNode, out: &mut Vec<FlatNode>) {
        match n {
            TreeNode::Leaf { weight } => out.push(FlatNode::Leaf { weight: *weight }),
            TreeNode::Dummy { left, right } => {
                out.push(FlatNode::Dummy);
                walk(left, out);
                walk(right, out);
            }
            TreeNode::Split { feature, local_feature, bucket, threshold, left, right } => {
                out.push(FlatNode::Split {
                    feature: *feature,
                    local_feature: *local_feature,
                    bucket: *bucket,
                    threshold: *threshold,
                });
                walk(left, out);
                walk(right, out);
            }
        }
    }
    walk(tree, &mut out);
    out
}

pub fn unflatten(nodes: &[FlatNode]) -> Result<TreeNode> {
    fn take(nodes: &[FlatNode], at: &mut usize) -> Result<TreeNode> {
        let n = nodes.get(*at).ok_or_else(|| Error::Model("node array ends early".into()))?;
        *at += 1;
        Ok(match n {
            FlatNode::Leaf { weight } => TreeNode::Leaf { weight: *weight },
            FlatNode::Dummy => {
                let left = Box::new(take(nodes, at)?);
                let right = Box::new(take(nodes, at)?);
                TreeNode::Dummy { left, right }
            }
            FlatNode::Split { feature, local_feature, bucket, threshold } => {
                let left = Box::new(take(nodes, at)?);
                let right = Box::new(take(nodes, at)?);
                TreeNode::Split {
                    feature: *feature,
                    local_feature: *local_feature,
                    bucket: *bucket,
                    threshold: *threshold,
                    left,
                    right,
                }
            }
        })
    }
    let mut at = 0;
    let t = take(nodes, &mut at)?;
    if at != nodes.len() {
        return Err(Error::Model(format!("{} trailing nodes", nodes.len() - at)));
    }
    Ok(t)
}

pub fn topology_hash(session_id: u64, owners: &[usize], shapes: &[Vec<bool>]) -> String {
    let mut h = Sha256::new();
    h.update(session_id.to_le_bytes());
    h.update((owners.len() as u64).to_le_bytes());
    for &o in owners {
        h.update((o as u64).to_le_bytes());
    }
    h.update((shapes.len() as u64).to_le_bytes());
    for s in shapes {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.iter().map(|&b| b as u8).collect::<Vec<u8>>());
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyModel {
    pub format: u32,
    /// 1-based participant index.
    pub party: usize,
    pub parties: usize,
    pub session_id: u64,
    pub topology_hash: String,
    pub loss: Loss,
    /// Names of this party's feature columns in local order.
    pub features: Vec<String>,
    /// Min-max bounds applied to those columns at training time.
    pub scaling: Option<Vec<(f64, f64)>>,
    /// Owning participant (1-based) per global feature id.
    pub feature_owners: Vec<usize>,
    pub trees: Vec<Vec<FlatNode>>,
}

impl PartyModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        party: PartyId,
        parties: usize,
        session_id: u64,
        loss: Loss,
        features: Vec<String>,
        scaling: Option<Vec<(f64, f64)>>,
        table: &FeatureTable,
        ensemble: &PartialEnsemble,
    ) -> PartyModel {
        let owners: Vec<usize> = table.owners.iter().map(|o| o.0 as usize).collect();
        let shapes: Vec<Vec<bool>> = ensemble.trees.iter().map(|t| t.shape()).collect();
        PartyModel {
            format: FORMAT_VERSION,
            party: party.0 as usize,
            parties,
            session_id,
            topology_hash: topology_hash(session_id, &owners, &shapes),
            loss,
            features,
            scaling,
            feature_owners: owners,
            trees: ensemble.trees.iter().map(flatten).collect(),
        }
    }

    pub fn ensemble(&self) -> Result<PartialEnsemble> {
        Ok(PartialEnsemble {
            owner: Some(PartyId::participant(self.party)),
            trees: self.trees.iter().map(|t| unflatten(t)).collect::<Result<_>>()?,
        })
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported format version {}", self.format)));
        }
        if self.party == 0 || self.party > self.parties {
            return Err(Error::Model(format!("party index {} outside 1..={}", self.party, self.parties)));
        }
        let e = self.ensemble()?;
        let shapes: Vec<Vec<bool>> = e.trees.iter().map(|t| t.shape()).collect();
        if topology_hash(self.session_id, &self.feature_owners, &shapes) != self.topology_hash {
            return Err(Error::Model(format!("model of P{} does not match its own topology hash", self.party)));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PartyModel> {
        let m: PartyModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.check()?;
        Ok(m)
    }
}

pub fn file_name(party: usize) -> String {
    format!("party-{party}.json")
}

pub fn save_all(dir: &Path, models: &[PartyModel]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    models
        .iter()
        .map(|m| {
            let p = dir.join(file_name(m.party));
            m.save(&p)?;
            Ok(p)
        })
        .collect()
}

/// Load every party's file from `dir`. The party count comes from the first
/// file found; a missing party or a hash disagreement is an error.
pub fn load_all(dir: &Path) -> Result<Vec<PartyModel>> {
    let mut found: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("party-") && n.ends_with(".json"))
        })
        .collect();
    found.sort();
    let first = found.first().ok_or_else(|| Error::Model(format!("no party model files in {}", dir.display())))?;
    let parties = PartyModel::load(first)?.parties;
    let mut out = Vec::with_capacity(parties);
    for m in 1..=parties {
        let path = dir.join(file_name(m));
        if !path.exists() {
            return Err(Error::Model(format!("model file for P{m} is missing ({})", path.display())));
        }
        let model = PartyModel::load(&path)?;
        if model.party != m {
            return Err(Error::Model(format!("{} holds the model of P{}", path.display(), model.party)));
        }
        if let Some(p1) = out.first() {
            let p1: &PartyModel = p1;
            if model.topology_hash != p1.topology_hash || model.parties != parties {
                return Err(Error::Model(format!("topology hash mismatch between P1 and P{m}")));
            }
        }
        out.push(model);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TreeNode {
        TreeNode::Split {
            feature: 2,
            local_feature: 0,
            bucket: 3,
            threshold: 0.1 + 0.2,
            left: Box::new(TreeNode::Dummy {
                left: Box::new(TreeNode::Leaf { weight: -123.456789012345 }),
                right: Box::new(TreeNode::Leaf { weight: 1e-17 }),
            }),
            right: Box::new(TreeNode::Leaf { weight: 0.7 }),
        }
    }

    #[test]
    fn flatten_round_trip() {
        let t = sample();
        let flat = flatten(&t);
        assert_eq!(flat.len(), 5);
        assert_eq!(unflatten(&flat).unwrap(), t);
        assert!(unflatten(&flat[..4]).is_err());
    }

    #[test]
    fn json_keeps_bits() {
        let t = sample();
        let s = serde_json::to_string(&flatten(&t)).unwrap();
        let back: Vec<FlatNode> = serde_json::from_str(&s).unwrap();
        assert_eq!(unflatten(&back).unwrap(), t);
    }

    #[test]
    fn hash_depends_on_session_and_shape() {
        let a = topology_hash(1, &[1, 2], &[vec![true, false, false]]);
        assert_ne!(a, topology_hash(2, &[1, 2], &[vec![true, false, false]]));
        assert_ne!(a, topology_hash(1, &[2, 1], &[vec![true, false, false]]));
        assert_ne!(a, topology_hash(1, &[1, 2], &[vec![false]]));
    }
}
