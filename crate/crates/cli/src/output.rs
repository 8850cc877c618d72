//! Artifact writers. Every CSV starts with a `# schema=<name>.v1` line and
//! every JSON document carries a `schema` field; the manifest is the only
//! file that records wall-clock time.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use renewal_ldp::model::format_real;
use renewal_ldp::{Error, XReal};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: &str = "v1";

pub fn schema_id(name: &str) -> String {
    format!("{name}.{SCHEMA_VERSION}")
}

pub fn real(v: f64) -> String {
    format_real(v)
}

pub fn xreal(v: XReal) -> String {
    format_real(v.to_f64())
}

pub fn opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(Error::io(path.display().to_string(), e))
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Output { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, body: String) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, schema: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut body = format!("# schema={}\n{}\n", schema_id(schema), header.join(","));
        for row in rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        self.write(name, body)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, schema: &str, data: &T) -> Result<(), CliError> {
        let doc = json!({ "schema": schema_id(schema), "data": data });
        let mut body = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Core(Error::Parse(e.to_string())))?;
        body.push('\n');
        self.write(name, body)
    }

    /// Writes `manifest.json` with the resolved configuration, the SHA-256 of
    /// the input file and the list of artifacts.
    pub fn manifest(&mut self, command: &str, config: Value, input: Option<&Path>) -> Result<(), CliError> {
        let digest = match input {
            Some(p) => {
                let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
                Some(hex::encode(Sha256::digest(&bytes)))
            }
            None => None,
        };
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let doc = json!({
            "schema": schema_id("manifest"),
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "input_path": input.map(|p| p.display().to_string()),
            "input_sha256": digest,
            "artifacts": self.artifacts,
            "created_unix": created,
        });
        let body = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Core(Error::Parse(e.to_string())))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))
    }
}
