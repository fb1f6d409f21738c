//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod cases;
pub mod exprs;
pub mod fixpoint;
pub mod lint;
pub mod plans;
pub mod tables;
pub mod thresholds;
pub mod voxel;

use std::path::PathBuf;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .find(|p| p.join("rulepacks").is_dir())
        .expect("workspace root with rulepacks/")
        .to_path_buf()
}

pub fn sample_pack_dir() -> PathBuf {
    repo_root().join("rulepacks/prostate_low_risk")
}

pub fn fixture(rel: &str) -> PathBuf {
    repo_root().join("fixtures").join(rel)
}
