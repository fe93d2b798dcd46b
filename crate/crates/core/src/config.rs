//! Run configuration: one JSON document with session, hyperparameters and
//! dataset sections. Missing fields take their defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::PartitionPlan;
use crate::error::{Error, Result};
use crate::party::{Backend, SessionConfig, DEFAULT_TRIPLE_BATCH};
use crate::share::DEFAULT_MASK_RANGE;
use crate::tree_build::HyperParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSpec {
    pub parties: usize,
    pub seed: u64,
    /// Defaults to the seed.
    pub session_id: Option<u64>,
    pub mask_range: f64,
    pub backend: Backend,
    pub timeout_secs: f64,
    pub permute_features: bool,
    pub triple_batch: usize,
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec {
            parties: 4,
            seed: 42,
            session_id: None,
            mask_range: DEFAULT_MASK_RANGE,
            backend: Backend::InProcess,
            timeout_secs: 30.0,
            permute_features: true,
            triple_batch: DEFAULT_TRIPLE_BATCH,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub features: usize,
    /// Defaults to the session seed.
    pub seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { rows: 1000, features: 8, seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// CSV file; when absent, `synthetic` data is generated.
    pub path: Option<PathBuf>,
    pub label: String,
    pub categorical: Vec<String>,
    pub partition: PartitionPlan,
    pub normalize: bool,
    pub test_fraction: f64,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            path: None,
            label: "label".into(),
            categorical: Vec::new(),
            partition: PartitionPlan::default(),
            normalize: true,
            test_fraction: 0.2,
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub session: SessionSpec,
    pub params: HyperParams,
    pub dataset: DatasetSpec,
    /// Train the plaintext oracle alongside and report the differences.
    pub oracle_check: bool,
    /// Audit the training transcripts.
    pub audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            session: SessionSpec::default(),
            params: HyperParams::default(),
            dataset: DatasetSpec::default(),
            oracle_check: true,
            audit: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let plan_parties = self.dataset.partition.parties();
        if plan_parties != self.session.parties {
            return Err(Error::Config(format!(
                "partition plan covers {plan_parties} parties but the session has {}",
                self.session.parties
            )));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(Error::Config(format!("test_fraction {} outside [0, 1)", self.dataset.test_fraction)));
        }
        if !(self.session.mask_range > 0.0) {
            return Err(Error::Config("mask_range must be positive".into()));
        }
        if !(self.session.timeout_secs > 0.0) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn session_config(&self) -> SessionConfig {
        let s = &self.session;
        SessionConfig {
            session_id: s.session_id.unwrap_or(s.seed),
            parties: s.parties,
            seed: s.seed,
            mask_range: s.mask_range,
            triple_batch: s.triple_batch,
            backend: s.backend,
            timeout: Duration::from_secs_f64(s.timeout_secs),
            permute_features: s.permute_features,
        }
    }
}
