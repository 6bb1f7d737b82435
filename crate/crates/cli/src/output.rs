use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const MANIFEST_VERSION: u64 = 1;

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Collects a command's outputs, then writes them followed by the manifest.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    extra: BTreeMap<String, Value>,
}

impl Outputs {
    pub fn new(dir: PathBuf) -> Self {
        Outputs { dir, files: Vec::new(), extra: BTreeMap::new() }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Extra manifest entry (for example the backend alphabet).
    pub fn note(&mut self, key: &str, v: Value) {
        self.extra.insert(key.to_string(), v);
    }

    pub fn commit(self, command: &str, config: &BTreeMap<String, String>) -> CliResult<()> {
        let mut listed = Vec::new();
        for (name, bytes) in &self.files {
            write_atomic(&self.dir.join(name), bytes)?;
            listed.push(json!({ "file": name, "bytes": bytes.len() }));
        }
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "v": MANIFEST_VERSION,
            "command": command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "outputs": listed,
            "details": self.extra,
            "created_unix": created,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest is valid JSON");
        text.push('\n');
        write_atomic(&self.dir.join(format!("{command}.manifest.json")), text.as_bytes())
    }
}
