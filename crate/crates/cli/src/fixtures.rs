//! Built-in instances, addressable as `fixture:<name>`.

use camdp_core::CmdpInstance;

use crate::error::{input, CliResult};

pub const FIXTURE_NAMES: &[&str] = &["binding4"];

/// Four states, two actions; the reward-greedy policy violates `b = 0.6` while the
/// constraint-greedy one clears it by more than 0.3.
pub fn binding4() -> CmdpInstance {
    #[rustfmt::skip]
    let kernel = vec![
        0.6, 0.4, 0.0, 0.0,   0.3, 0.0, 0.7, 0.0,
        0.5, 0.3, 0.0, 0.2,   0.0, 0.0, 0.6, 0.4,
        0.5, 0.0, 0.5, 0.0,   0.0, 0.0, 0.3, 0.7,
        0.4, 0.0, 0.0, 0.6,   0.0, 0.0, 1.0, 0.0,
    ];
    let reward = vec![0.9, 0.2, 0.8, 0.3, 0.4, 0.1, 0.6, 0.0];
    let constraint = vec![0.1, 0.9, 0.2, 0.8, 0.9, 1.0, 0.5, 0.95];
    CmdpInstance::new(4, 2, kernel, reward, constraint, 0.6, vec![1.0, 0.0, 0.0, 0.0]).expect("fixture is valid")
}

pub fn fixture(name: &str) -> CliResult<CmdpInstance> {
    match name {
        "binding4" => Ok(binding4()),
        _ => input(format!("unknown fixture {name:?}; known: {}", FIXTURE_NAMES.join(", "))),
    }
}
