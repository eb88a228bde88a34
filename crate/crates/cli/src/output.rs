//! Artifact writing: provenance headers, fixed-precision numbers and
//! write-then-rename.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::{json, Value};

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number, or its [`num`] text when not finite.
pub fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(num(x))
    }
}

/// Where and how artifacts are written.
pub struct Sink {
    dir: PathBuf,
    hash: String,
    seed: u64,
    stamp: bool,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: impl Into<PathBuf>, hash: String, seed: u64, stamp: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir, hash, seed, stamp, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("config_sha256: {}", self.hash), format!("seed: {}", self.seed)];
        if self.stamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            lines.push(format!("generated_unix: {secs}"));
        }
        lines
    }

    /// CSV with `#` provenance lines, a header row and preformatted cells.
    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = String::new();
        for line in self.header_lines() {
            text.push_str(&format!("# {line}\n"));
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write(name, &text)
    }

    /// JSON object with `config_sha256`, `seed` (and the stamp) merged in.
    pub fn json(&mut self, name: &str, body: Value) -> Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("config_sha256".into(), json!(self.hash));
        obj.insert("seed".into(), json!(self.seed));
        if self.stamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            obj.insert("generated_unix".into(), json!(secs));
        }
        match body {
            Value::Object(map) => obj.extend(map),
            other => {
                obj.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

/// Writes to a sibling temporary file, syncs it and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}
