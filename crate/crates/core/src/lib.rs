pub mod audit;
pub mod bench;
pub mod config;
pub mod data;
pub mod div_newton;
pub mod error;
pub mod federated;
pub mod leaf_weight;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod party;
pub mod predict;
pub mod run;
pub mod share;
pub mod split_select;
pub mod transport;
pub mod tree_build;

pub use error::{Error, Result};
pub use share::{PartyId, ShareVector};
