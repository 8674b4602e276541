//! The DeFT-AN network, its configuration, and size accounting.

mod accounting;
mod config;
mod network;

pub use accounting::{mac_estimate, param_count, MacEstimate};
pub use config::{ModelConfig, Preset, SubBlock, TFfwKind};
pub use network::{DeftAn, Enhanced};
