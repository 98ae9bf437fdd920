//! Run manifests: flat `key=value` text, one pair per line, UTF-8. Every run
//! writes one next to its output; re-running from a manifest reproduces the
//! output image bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;

pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_opt(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.push(key, v);
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.render())
    }
}

pub fn read(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read manifest: {e}"))?;
    let mut map = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("manifest line {} is not key=value", ln + 1))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

pub fn get_parsed<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<T, String> {
    let raw = map
        .get(key)
        .ok_or_else(|| format!("manifest is missing '{key}'"))?;
    raw.parse()
        .map_err(|_| format!("manifest value '{raw}' for '{key}' does not parse"))
}

pub fn get_parsed_opt<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| format!("manifest value '{raw}' for '{key}' does not parse")),
    }
}
