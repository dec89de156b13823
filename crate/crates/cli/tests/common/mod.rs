//! Shared fixtures for the command-line tests: canned networks, instance
//! files, and a thin wrapper around invoking the built binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Path of the binary under test.
pub const BIN: &str = env!("CARGO_BIN_EXE_relucheck");

/// 2-2-2 network with anchor label 1 around the origin and true robustness
/// radius 1.25.
pub const DEMO_NET: &str = r#"{"layers": [
  {"weights": [[1.0, -1.0], [1.0, 1.0]], "bias": [0.0, 2.5]},
  {"relu": true},
  {"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0]}
]}"#;

/// 3-4-4-3 network with awkward decimal weights; exercises multi-layer
/// refinement and parallel sub-box analysis.
pub const DEEP_NET: &str = r#"{"layers": [
  {"weights": [[0.31, -0.77, 0.52], [-0.64, 0.11, 0.93], [0.27, 0.58, -0.41], [-0.19, -0.83, 0.36]],
   "bias": [0.12, -0.31, 0.05, 0.44]},
  {"relu": true},
  {"weights": [[0.45, -0.29, 0.61, -0.53], [-0.37, 0.72, 0.18, 0.26], [0.59, 0.14, -0.66, 0.31], [0.23, -0.48, 0.37, -0.12]],
   "bias": [-0.07, 0.21, 0.33, -0.25]},
  {"relu": true},
  {"weights": [[0.64, -0.21, 0.43, 0.17], [-0.33, 0.56, -0.27, 0.49], [0.12, 0.38, 0.55, -0.61]],
   "bias": [0.09, -0.14, 0.2]}
]}"#;

/// Writes a network and centre-input file into `dir`, returning their paths.
pub fn write_instance(dir: &Path, net_json: &str, input: &str) -> (PathBuf, PathBuf) {
    let net = dir.join("net.json");
    let x = dir.join("x.txt");
    fs::write(&net, net_json).unwrap();
    fs::write(&x, input).unwrap();
    (net, x)
}

/// Runs the binary with the given arguments.
pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("failed to launch the binary")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process was killed by a signal")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stdout.clone()).expect("stdout is not UTF-8");
    serde_json::from_str(&text).unwrap_or_else(|e| {
        panic!("stdout is not a JSON report: {e}\n---\n{text}\n---")
    })
}
