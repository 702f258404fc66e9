//! Datasets and runs, keyed by content hash, optionally mirrored to a directory.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stpm_core::ingest::{DatasetDescriptor, IngestReport};
use stpm_core::{Artifact, RunConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetRecord {
    pub dataset_id: String,
    pub region_id_property: String,
    pub descriptor: DatasetDescriptor,
    pub report: IngestReport,
    pub events_csv: String,
    pub regions_geojson: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Mining,
    Clustering,
    Ready,
    Failed,
}

/// Run state without its artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunInfo {
    pub run_id: String,
    pub dataset_id: String,
    pub status: RunStatus,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A finished run: the artifact plus its canonical export bytes.
#[derive(Debug)]
pub struct ReadyRun {
    pub artifact: Artifact,
    pub export: String,
}

#[derive(Clone, Debug)]
pub struct RunEntry {
    pub info: RunInfo,
    pub ready: Option<Arc<ReadyRun>>,
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn dataset_id(events: &[u8], regions: Option<&[u8]>, region_id_property: &str) -> String {
    sha256_hex(&[
        b"dataset",
        events,
        regions.unwrap_or_default(),
        region_id_property.as_bytes(),
    ])
}

pub fn run_id(dataset_id: &str, config: &RunConfig) -> String {
    let config = serde_json::to_vec(config).expect("config serializes");
    sha256_hex(&[b"run", dataset_id.as_bytes(), &config])
}

#[derive(Default)]
pub struct Store {
    dir: Option<PathBuf>,
    datasets: RwLock<HashMap<String, Arc<DatasetRecord>>>,
    runs: RwLock<HashMap<String, RunEntry>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn json_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens a store under `dir`, loading datasets and finished runs written earlier.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("datasets"))?;
        fs::create_dir_all(dir.join("runs"))?;
        let store = Store {
            dir: Some(dir.clone()),
            ..Store::default()
        };
        {
            let mut datasets = store.datasets.write().unwrap();
            for path in json_files(&dir.join("datasets"))? {
                match serde_json::from_slice::<DatasetRecord>(&fs::read(&path)?) {
                    Ok(rec) => {
                        datasets.insert(rec.dataset_id.clone(), Arc::new(rec));
                    }
                    Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        {
            let mut runs = store.runs.write().unwrap();
            for path in json_files(&dir.join("runs"))? {
                match load_run(&path) {
                    Ok(entry) => {
                        runs.insert(entry.info.run_id.clone(), entry);
                    }
                    Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        Ok(store)
    }

    pub fn put_dataset(&self, rec: DatasetRecord) -> io::Result<Arc<DatasetRecord>> {
        if let Some(dir) = &self.dir {
            let bytes = serde_json::to_vec(&rec).expect("dataset serializes");
            write_atomic(
                &dir.join("datasets")
                    .join(format!("{}.json", rec.dataset_id)),
                &bytes,
            )?;
        }
        let rec = Arc::new(rec);
        self.datasets
            .write()
            .unwrap()
            .insert(rec.dataset_id.clone(), rec.clone());
        Ok(rec)
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<DatasetRecord>> {
        self.datasets.read().unwrap().get(id).cloned()
    }

    pub fn run(&self, id: &str) -> Option<RunEntry> {
        self.runs.read().unwrap().get(id).cloned()
    }

    /// Registers a pending run unless one with this id exists and has not failed.
    /// Returns whether the caller should execute it.
    pub fn begin_run(&self, info: RunInfo) -> bool {
        let mut runs = self.runs.write().unwrap();
        if runs
            .get(&info.run_id)
            .is_some_and(|e| e.info.status != RunStatus::Failed)
        {
            return false;
        }
        runs.insert(info.run_id.clone(), RunEntry { info, ready: None });
        true
    }

    pub fn set_status(&self, id: &str, status: RunStatus) {
        if let Some(e) = self.runs.write().unwrap().get_mut(id) {
            e.info.status = status;
        }
    }

    /// Persists the outcome, then publishes it, so a reader that sees `ready`
    /// can reopen the store and find the same export.
    pub fn finish_run(&self, id: &str, outcome: Result<Artifact, String>) {
        let Some(mut entry) = self.run(id) else {
            return;
        };
        match outcome {
            Ok(artifact) => {
                entry.info.status = RunStatus::Ready;
                entry.ready = Some(Arc::new(ReadyRun {
                    export: artifact.to_json(),
                    artifact,
                }));
            }
            Err(message) => {
                entry.info.status = RunStatus::Failed;
                entry.info.error = Some(message);
            }
        }
        if let Some(dir) = &self.dir {
            if let Err(e) = persist_run(&dir.join("runs"), &entry) {
                tracing::error!("persisting run {id}: {e}");
            }
        }
        self.runs.write().unwrap().insert(id.to_string(), entry);
    }
}

fn export_path(runs_dir: &Path, id: &str) -> PathBuf {
    runs_dir.join(format!("{id}.artifact"))
}

/// Writes the export bytes verbatim beside the run info.
fn persist_run(runs_dir: &Path, entry: &RunEntry) -> io::Result<()> {
    let id = &entry.info.run_id;
    if let Some(ready) = &entry.ready {
        write_atomic(&export_path(runs_dir, id), ready.export.as_bytes())?;
    }
    let info = serde_json::to_vec(&entry.info).expect("run info serializes");
    write_atomic(&runs_dir.join(format!("{id}.json")), &info)
}

fn load_run(path: &Path) -> io::Result<RunEntry> {
    let info: RunInfo = serde_json::from_slice(&fs::read(path)?)?;
    let ready = match info.status {
        RunStatus::Ready => {
            let export = fs::read_to_string(export_path(path.parent().unwrap(), &info.run_id))?;
            let artifact = serde_json::from_str(&export)?;
            Some(Arc::new(ReadyRun { artifact, export }))
        }
        _ => None,
    };
    Ok(RunEntry { info, ready })
}
