use std::path::Path;

use anyhow::Result;
use mcsloc_core::dataset::{self, RecordingMeta};
use mcsloc_core::mcs::McsTable;
use mcsloc_core::Error;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::workspace::{recording_file_name, staging_path, with_jobs, Manifest, ManifestEntry, MANIFEST};

pub fn run(cfg: &ExperimentConfig, table: &McsTable, out: &Path, jobs: usize) -> Result<Manifest> {
    let spec = &cfg.dataset;
    let mut metas = Vec::new();
    for &mcs in &spec.mcs_values {
        for &sinr_db in &spec.sinr_grid_db {
            for file_index in 0..spec.files_per_tuple {
                metas.push(RecordingMeta {
                    mcs,
                    sinr_db,
                    file_index,
                    seed: dataset::recording_seed(cfg.signal.seed, mcs, sinr_db, file_index),
                    sample_rate_hz: cfg.signal.sample_rate_hz,
                    n_samples: spec.samples_per_file,
                });
            }
        }
    }
    let manifest = Manifest {
        version: 1,
        dataset: spec.clone(),
        signal: cfg.signal.clone(),
        recordings: metas
            .iter()
            .map(|m| ManifestEntry {
                file: recording_file_name(m),
                meta: m.clone(),
            })
            .collect(),
    };

    let dir = cfg.dataset_dir(out);
    let staging = staging_path(&dir);
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::Io { path: p, source: e }
    };
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(io(&staging))?;
    }
    std::fs::create_dir_all(&staging).map_err(io(&staging))?;

    let written = with_jobs(jobs, || {
        manifest.recordings.par_iter().try_for_each(|entry| -> Result<()> {
            let buffer = dataset::synthesize_recording(&entry.meta, table, &cfg.signal)?;
            dataset::write_recording(&buffer, &entry.meta, &staging.join(&entry.file))?;
            Ok(())
        })
    })
    .and_then(|r| r)
    .and_then(|()| {
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(staging.join(MANIFEST), text).map_err(io(&staging.join(MANIFEST)))?;
        Ok(())
    });
    if let Err(e) = written {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io(&dir))?;
    }
    std::fs::rename(&staging, &dir).map_err(io(&dir))?;
    eprintln!(
        "wrote {} recordings of {} samples to {}",
        manifest.recordings.len(),
        spec.samples_per_file,
        dir.display()
    );
    Ok(manifest)
}
