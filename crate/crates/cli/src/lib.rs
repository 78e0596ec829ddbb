//! Batch driver for pinlab-core: TOML run configs, per-mode subcommands,
//! hashed run directories with checksummed manifests.

pub mod config;
pub mod run;
