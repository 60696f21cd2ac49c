//! Result emission: JSON with an embedded manifest, or CSV with a sidecar
//! manifest. Floats are written in scientific notation with six significant
//! digits; object keys are sorted.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(config: Value, seed: Option<u64>, out: Option<&Path>) -> Self {
        let mut outputs = Vec::new();
        if let Some(p) = out {
            outputs.push(p.display().to_string());
        }
        Self {
            command: std::env::args().collect(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }
}

pub fn sci(x: f64) -> String {
    if x.is_finite() { format!("{x:.5e}") } else if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().unwrap_or(f64::NAN);
                out.push_str(&if f.is_finite() { sci(f) } else { "null".into() });
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn render_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = String::new();
    write_value(&mut s, &serde_json::to_value(v)?, 0);
    s.push('\n');
    Ok(s)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One JSON object: `{"manifest": ..., "result": ...}`.
pub fn emit_json<T: Serialize>(result: &T, manifest: &RunManifest, path: Option<&Path>) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        manifest: &'a RunManifest,
        result: &'a T,
    }
    write_out(path, &render_json(&Doc { manifest, result })?)
}

/// A table of already-formatted cells.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn render(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?)?)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// CSV to `path` plus `<path>.manifest.json`, or CSV alone on stdout.
pub fn emit_csv(table: &Table, manifest: &RunManifest, path: Option<&Path>) -> Result<()> {
    if table.rows.is_empty() {
        anyhow::bail!(memshield_core::Error::Invariant("empty result table".into()));
    }
    write_out(path, &table.render()?)?;
    if let Some(p) = path {
        let side = sidecar(p);
        let mut m = manifest.clone();
        m.outputs.push(side.display().to_string());
        std::fs::write(&side, render_json(&m)?).with_context(|| format!("cannot write {}", side.display()))?;
    }
    Ok(())
}
