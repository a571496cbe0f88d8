use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use mind_core::Error;
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: &str = "1.0.0";

pub fn report_schema_version() -> &'static str {
    SCHEMA_VERSION
}

/// Top-level JSON document: schema, command, timestamp, resolved config, then sections.
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, config: Value) -> Self {
        let generated_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut fields = Map::new();
        fields.insert("schema".into(), json!(report_schema_version()));
        fields.insert("command".into(), json!(command));
        fields.insert("generated_at".into(), json!(generated_at));
        fields.insert("config".into(), config);
        Self { fields }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.fields.insert(key.into(), value);
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, Failure> {
        let mut out = serde_json::to_vec_pretty(&self.fields).map_err(Failure::internal)?;
        out.push(b'\n');
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Data,
    Solver,
    Internal,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Data, message: message.into() }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self { kind: FailureKind::Internal, message: e.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            FailureKind::Usage => 2,
            FailureKind::Data => 3,
            FailureKind::Solver => 4,
            FailureKind::Internal => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = if e.is_solver_failure() {
            FailureKind::Solver
        } else {
            FailureKind::Data
        };
        Self { kind, message: e.to_string() }
    }
}

/// Writes the machine-readable error object to standard error.
pub fn emit_error(f: &Failure) {
    let kind = match f.kind {
        FailureKind::Usage => "usage",
        FailureKind::Data => "data",
        FailureKind::Solver => "solver",
        FailureKind::Internal => "internal",
    };
    let doc = json!({
        "schema": report_schema_version(),
        "error": { "kind": kind, "message": f.message, "exit_code": f.exit_code() },
    });
    eprintln!("{doc}");
}

/// `-` writes to standard output.
pub fn write_output(path: &str, bytes: &[u8]) -> Result<(), Failure> {
    let res = if path == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush())
    } else {
        std::fs::write(path, bytes)
    };
    res.map_err(|e| Failure::data(format!("cannot write {path}: {e}")))
}
