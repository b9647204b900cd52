use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Formats a number with 15 significant digits. Plain notation for
/// moderate magnitudes, scientific otherwise.
pub fn sig15(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.14e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Fixed 15 fractional digits, the layout of the Newton tables.
pub fn fixed15(x: f64) -> String {
    format!("{x:.15}")
}

#[derive(Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Csv::default();
        csv.row(header.iter().map(|s| s.to_string()));
        csv
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let line: Vec<String> = fields.into_iter().collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Provenance record written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub output_path: PathBuf,
    pub tool_version: String,
    pub seed: Option<u64>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Flattens a serializable argument struct into string key-value pairs.
pub fn parameters<T: Serialize>(args: &T) -> BTreeMap<String, String> {
    let value = serde_json::to_value(args).expect("arguments serialize");
    let mut map = BTreeMap::new();
    if let serde_json::Value::Object(obj) = value {
        for (k, v) in obj {
            map.insert(k, flatten(&v));
        }
    }
    map
}

fn flatten(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(items) => items.iter().map(flatten).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Sends `text` to `out` (plus its manifest) or to stdout.
pub fn emit(text: &str, out: Option<&Path>, manifest: RunManifest) -> io::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
            fs::write(manifest_path(path), json + "\n")
        }
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}
