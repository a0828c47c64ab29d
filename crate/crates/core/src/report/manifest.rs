use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Record of one run. Everything except the timestamps is a function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub input: Option<String>,
    pub input_sha256: Option<String>,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
    pub notices: Vec<String>,
    pub outputs: Vec<OutputEntry>,
}

pub(crate) fn now() -> String {
    humantime::format_rfc3339_millis(SystemTime::now()).to_string()
}

/// Files written into one output directory, in order.
pub(crate) struct Outputs {
    dir: PathBuf,
    pub(crate) entries: Vec<OutputEntry>,
}

impl Outputs {
    pub(crate) fn create(dir: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Output {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    pub(crate) fn write(&mut self, name: &str, kind: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| RunError::Output {
            path: path.display().to_string(),
            source,
        })?;
        self.entries.push(OutputEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub(crate) fn write_json<T: Serialize>(&mut self, name: &str, kind: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, kind, text.as_bytes())
    }

    pub(crate) fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn timestamps_are_rfc3339() {
        let t = now();
        assert!(humantime::parse_rfc3339(&t).is_ok(), "{t}");
    }
}
