//! Run manifests: enough to re-execute a run and trace its inputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::format::write_file;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub grid_step: f64,
    pub tail_mass: f64,
    pub tol: f64,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(InputDigest { path: path.display().to_string(), sha256: digest_bytes(&bytes) })
}

impl RunManifest {
    /// Manifest path for a run: `<out-dir>/manifest.json` when an output
    /// directory is set, otherwise `<first output>.manifest.json`.
    pub fn location(out_dir: Option<&Path>, outputs: &[PathBuf]) -> Option<PathBuf> {
        match (out_dir, outputs.first()) {
            (Some(dir), _) => Some(dir.join("manifest.json")),
            (None, Some(first)) => {
                let mut name = first.as_os_str().to_owned();
                name.push(".manifest.json");
                Some(PathBuf::from(name))
            }
            (None, None) => None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        json.push(b'\n');
        write_file(path, &json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_content_hash() {
        assert_eq!(
            digest_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_location() {
        assert_eq!(
            RunManifest::location(Some(Path::new("runs")), &[PathBuf::from("x.csv")]),
            Some(PathBuf::from("runs/manifest.json"))
        );
        assert_eq!(
            RunManifest::location(None, &[PathBuf::from("out/x.csv")]),
            Some(PathBuf::from("out/x.csv.manifest.json"))
        );
        assert_eq!(RunManifest::location(None, &[]), None);
    }
}
