//! Dataset manifest, window loading and output-file helpers shared by the
//! subcommands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mcsloc_core::dataset::{self, DatasetSpec, ExampleWindow, RecordingMeta};
use mcsloc_core::phy::SignalConfig;
use mcsloc_core::seed::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
const WINDOW_STREAM: u64 = 0x57494e44;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Payload file name inside the dataset directory.
    pub file: String,
    #[serde(flatten)]
    pub meta: RecordingMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dataset: DatasetSpec,
    pub signal: SignalConfig,
    pub recordings: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dataset_dir: &Path) -> Result<Self> {
        let path = dataset_dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| mcsloc_core::Error::Io { path: path.clone(), source: e })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| mcsloc_core::Error::Format {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        m.dataset.validate()?;
        Ok(m)
    }
}

pub fn recording_file_name(meta: &RecordingMeta) -> String {
    format!(
        "mcs{:02}_sinr{:+06.2}_f{:02}.iq",
        meta.mcs, meta.sinr_db, meta.file_index
    )
}

/// Reads one recording and checks it against its manifest entry.
fn load_windows(
    dir: &Path,
    entry: &ManifestEntry,
    spec: &DatasetSpec,
) -> Result<Vec<ExampleWindow<f32>>> {
    let path = dir.join(&entry.file);
    let (buffer, meta) = dataset::read_recording(&path)?;
    if meta != entry.meta {
        return Err(mcsloc_core::Error::Format {
            path,
            msg: "sidecar metadata differs from the manifest".into(),
        }
        .into());
    }
    Ok(dataset::extract_windows(
        &buffer,
        &meta,
        spec,
        derive_seed(meta.seed, &[WINDOW_STREAM]),
    )?)
}

/// Training and validation windows, in manifest order.
pub fn load_split_windows(
    dir: &Path,
    manifest: &Manifest,
    want_train: bool,
) -> Result<(Vec<ExampleWindow<f32>>, Vec<ExampleWindow<f32>>)> {
    let metas: Vec<RecordingMeta> = manifest.recordings.iter().map(|e| e.meta.clone()).collect();
    let (train, val) = dataset::build_splits(&metas, &manifest.dataset)?;
    let pick = |set: &[RecordingMeta]| -> Result<Vec<ExampleWindow<f32>>> {
        let entries: Vec<&ManifestEntry> = manifest
            .recordings
            .iter()
            .filter(|e| set.contains(&e.meta))
            .collect();
        let per_file = entries
            .par_iter()
            .map(|e| load_windows(dir, e, &manifest.dataset))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_file.into_iter().flatten().collect())
    };
    let train_windows = if want_train { pick(&train)? } else { Vec::new() };
    Ok((train_windows, pick(&val)?))
}

/// `dir` with `.partial` appended to its final component.
pub fn staging_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Writes `bytes` to a staging file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| mcsloc_core::Error::Io { path: parent.into(), source: e })?;
    }
    let tmp = staging_path(path);
    std::fs::write(&tmp, bytes).map_err(|e| mcsloc_core::Error::Io { path: tmp.clone(), source: e })?;
    std::fs::rename(&tmp, path)
        .map_err(|e| mcsloc_core::Error::Io { path: path.into(), source: e })
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Runs `work` with a rayon pool of `jobs` threads.
pub fn with_jobs<R: Send>(jobs: usize, work: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building worker pool")?;
    Ok(pool.install(work))
}
