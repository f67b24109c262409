//! Report bundles, format filtering, atomic persistence and the run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lipalpha_core::io::to_json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    fn of(name: &str) -> Option<Self> {
        match Path::new(name).extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            "svg" => Some(Format::Svg),
            _ => None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Named outputs in insertion order, plus the step seeds that produced them.
#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
    pub seeds: BTreeMap<String, u64>,
}

impl Bundle {
    pub fn add(&mut self, name: &str, content: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), content.into()));
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) {
        self.add(name, to_json(value));
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn retain_formats(&mut self, formats: &[Format]) {
        self.files
            .retain(|(n, _)| Format::of(n).is_none_or(|f| formats.contains(&f)));
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub exit_code: i32,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<FileHash>,
    pub wall_time_seconds: f64,
}

/// Writes `bytes` to `dir/name` through a temporary file in `dir` and an
/// atomic rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(target)
}

/// Persists every file of the bundle, then the manifest.
pub fn persist(dir: &Path, bundle: &Bundle, manifest_base: RunManifest) -> std::io::Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = manifest_base;
    manifest.outputs = bundle
        .files()
        .iter()
        .map(|(n, b)| FileHash {
            path: n.clone(),
            sha256: sha256_hex(b),
        })
        .collect();
    for (name, bytes) in bundle.files() {
        write_atomic(dir, name, bytes)?;
    }
    write_atomic(dir, "manifest.json", to_json(&manifest).as_bytes())?;
    Ok(manifest)
}
