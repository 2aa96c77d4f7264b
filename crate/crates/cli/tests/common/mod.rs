#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn brtwarn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brtwarn"))
        .args(args)
        .env("BRTWARN_THREADS", "1")
        .output()
        .expect("spawn brtwarn")
}

/// Runs the CLI, requires exit 0 and parses stdout as JSON.
pub fn json(args: &[&str]) -> serde_json::Value {
    let out = brtwarn(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "brtwarn {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

pub fn code(args: &[&str]) -> i32 {
    brtwarn(args).status.code().expect("exit code")
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}
