//! Run report emitted once per invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub config: Value,
    pub results: Value,
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    pub wall_time_s: f64,
}

pub struct ReportBuilder {
    started: Instant,
    pub report: RunReport,
}

impl ReportBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            started: Instant::now(),
            report: RunReport {
                schema_version: SCHEMA_VERSION,
                command: command.to_string(),
                argv: std::env::args().collect(),
                inputs: Vec::new(),
                config: Value::Null,
                results: Value::Null,
                outputs: BTreeMap::new(),
                warnings: Vec::new(),
                exit_code: 0,
                wall_time_s: 0.0,
            },
        }
    }

    pub fn digest(&mut self, path: &Path, bytes: &[u8]) {
        self.report.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.report.outputs.insert(role.to_string(), path.display().to_string());
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.report.warnings.push(w.into());
    }

    pub fn finish(mut self, exit_code: i32) -> RunReport {
        self.report.exit_code = exit_code;
        self.report.wall_time_s = self.started.elapsed().as_secs_f64();
        self.report
    }
}

/// Report path for commands whose output is a single file.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}
