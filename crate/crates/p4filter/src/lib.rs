//! JSON file formats, the file-backed sequence store and report output for
//! the `p4filter` command.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use p4filter_core::controller::{Acl, PersistError, SequencePersistence, SequenceStore};
use p4filter_core::simnet::{RunReport, Scenario, TopologySpec};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot access sequence store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sequence store {path}: {reason}")]
    MalformedStore { path: PathBuf, reason: String },
}

/// Reads a sequence store. An empty file is an empty store.
pub fn load_store(path: &Path) -> Result<SequenceStore, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_store(&text).map_err(|reason| StoreError::MalformedStore {
        path: path.to_owned(),
        reason,
    })
}

pub fn parse_store(text: &str) -> Result<SequenceStore, String> {
    if text.trim().is_empty() {
        return Ok(SequenceStore::new());
    }
    serde_json::from_str(text).map_err(|e| e.to_string())
}

/// Canonical text form: pretty JSON, keys in address order, trailing newline.
pub fn store_to_string(store: &SequenceStore) -> String {
    let mut text = serde_json::to_string_pretty(store).expect("store serializes");
    text.push('\n');
    text
}

/// Writes the store through a temporary file and a rename, so a reader never
/// sees a partial file.
pub fn save_store(store: &SequenceStore, path: &Path) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_owned(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(store_to_string(store).as_bytes())
        .map_err(io)?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Persists every controller allocation to a JSON file.
#[derive(Debug, Clone)]
pub struct FileStore {
    path: PathBuf,
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl SequencePersistence for FileStore {
    fn persist(&mut self, store: &SequenceStore) -> Result<(), PersistError> {
        save_store(store, &self.path).map_err(|e| PersistError(e.to_string()))
    }
}

fn load_json<T: DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

pub fn load_topology(path: &Path) -> anyhow::Result<TopologySpec> {
    load_json(path, "topology")
}

pub fn load_acl(path: &Path) -> anyhow::Result<Acl> {
    load_json(path, "ACL")
}

pub fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    load_json(path, "scenario")
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    text
}

pub fn report_to_json(report: &RunReport) -> String {
    to_pretty_json(report)
}

/// SHA-256 of the report's JSON text, hex encoded.
pub fn report_digest(report: &RunReport) -> String {
    hex::encode(Sha256::digest(report_to_json(report).as_bytes()))
}

/// The switch event logs as JSON lines, in global order.
pub fn trace_jsonl(report: &RunReport) -> String {
    report
        .trace
        .iter()
        .map(|t| serde_json::to_string(&t.event).expect("event serializes") + "\n")
        .collect()
}

#[derive(Serialize)]
struct RuleLine<'a> {
    switch: &'a str,
    #[serde(flatten)]
    rule: &'a p4filter_core::table::RuleRecord,
}

/// The final rule dump as JSON lines, one rule per line.
pub fn rules_jsonl(report: &RunReport) -> String {
    report
        .rules
        .iter()
        .flat_map(|(switch, rules)| rules.iter().map(move |rule| RuleLine { switch, rule }))
        .map(|line| serde_json::to_string(&line).expect("rule serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use p4filter_core::knocking::KnockSequence;
    use std::net::Ipv4Addr;

    #[test]
    fn empty_file_is_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        fs::write(&path, "").unwrap();
        assert!(load_store(&path).unwrap().is_empty());
        fs::write(&path, "  \n").unwrap();
        assert!(load_store(&path).unwrap().is_empty());
    }

    #[test]
    fn low_knock_port_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        fs::write(
            &path,
            r#"{"10.0.2.2":{"knocks":[80,2000,3000],"service":22}}"#,
        )
        .unwrap();
        assert!(matches!(
            load_store(&path),
            Err(StoreError::MalformedStore { .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_store(&dir.path().join("absent.json")),
            Err(StoreError::Io { .. })
        ));
    }

    #[test]
    fn save_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let mut store = SequenceStore::new();
        store.insert(
            Ipv4Addr::new(10, 0, 2, 2),
            KnockSequence::new([59275, 10989, 18698], 22).unwrap(),
        );
        save_store(&store, &path).unwrap();
        let first = fs::read(&path).unwrap();
        let loaded = load_store(&path).unwrap();
        assert_eq!(loaded, store);
        save_store(&loaded, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn file_store_reports_write_failure() {
        let dir = tempfile::tempdir().unwrap();
        let mut fs_store = FileStore::new(dir.path().join("missing").join("store.json"));
        assert!(fs_store.persist(&SequenceStore::new()).is_err());
    }
}
