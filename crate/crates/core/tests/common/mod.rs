#![allow(dead_code)]

use netslice::harness::{ExperimentConfig, Scale};

/// Two cells and a few dozen slots per phase: seconds, not minutes.
pub const TINY_TOML: &str = r#"
scale = "desk"
seed = 5
schemes = ["idla", "traffic"]

[sim]
num_cells = 2

[phases]
collect = 60
optimize = 30
reconfigure = 30

[estimator.train]
epochs = 3
"#;

pub fn tiny_config(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(TINY_TOML, Some(Scale::Desk)).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}
