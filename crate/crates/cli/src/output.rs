//! Number formatting, atomic file output and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats `x` with 10 significant digits and a '.' separator.
///
/// Moderate magnitudes are written in positional notation with trailing
/// zeros trimmed; very small or very large ones in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.9e}", x);
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        sci
    }
}

/// Simple CSV table with a fixed header.
pub struct Csv {
    lines: Vec<String>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            lines: vec![header.join(",")],
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn finish(self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

#[derive(Debug, Serialize)]
struct OutputRecord {
    path: String,
    sha256: String,
}

/// Sidecar describing how an output file was produced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn new(command: &str, params: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            params,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
        }
    }
}

/// Writes `contents` to `path` via a temporary file in the same directory
/// and a rename, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Emits `contents` to `out` (with a manifest sidecar) or to stdout.
/// Returns the manifest path when one was written.
pub fn emit(out: Option<&Path>, contents: &str, mut manifest: RunManifest) -> Result<Option<PathBuf>> {
    let Some(path) = out else {
        print!("{contents}");
        return Ok(None);
    };
    write_atomic(path, contents.as_bytes())?;
    manifest.outputs.push(OutputRecord {
        path: path.display().to_string(),
        sha256: hex_digest(contents.as_bytes()),
    });
    let mpath = manifest_path(path);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&mpath, json.as_bytes())?;
    Ok(Some(mpath))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
