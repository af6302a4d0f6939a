use std::path::Path;

use anyhow::Result;
use mcsloc_core::dataset::ExampleWindow;
use mcsloc_core::eval::{accuracy, confusion, emit_reports};
use mcsloc_core::locmap::{
    build_map, chebyshev, coarsen_index, locate, merge_tiles, simulate_environment, McsMap,
    MCS_HI, MCS_LO,
};
use mcsloc_core::mcs::McsTable;
use mcsloc_core::phy::{apply_awgn, generate_baseband};
use mcsloc_core::seed::derive_seed;
use mcsloc_core::tcn::Network;
use mcsloc_core::{checkpoint, Error};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Fingerprint};
use crate::workspace::{with_jobs, write_atomic};

pub const SUMMARY: &str = "locate.json";
const TX_STREAM: u64 = 0x5458;
/// Shadowing stream of the survey; equal to the one `simulate_environment` uses.
const SURVEY_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateSummary {
    pub rows: usize,
    pub cols: usize,
    pub merged_rows: usize,
    pub merged_cols: usize,
    pub fingerprint: Fingerprint,
    pub positions: usize,
    pub detections_per_position: usize,
    pub exact_accuracy: f64,
    pub neighbor_accuracy: f64,
    pub merged_exact_accuracy: f64,
    pub merged_neighbor_accuracy: f64,
    pub chance_exact: f64,
    /// MCS detection accuracy over the test transmissions.
    pub detection_accuracy: f64,
}

#[derive(Debug, Clone, Copy)]
struct Transmission {
    sinr_db: f64,
    mcs: u8,
    seed: u64,
}

fn transmissions(cfg: &ExperimentConfig, row: usize, col: usize, stream: u64, n: usize) -> Vec<Transmission> {
    let env = &cfg.environment;
    env.sample_sinr_db(row, col, stream, n)
        .into_iter()
        .enumerate()
        .map(|(i, sinr_db)| Transmission {
            sinr_db,
            mcs: mcsloc_core::locmap::sinr_to_mcs(sinr_db, &env.link_adaptation),
            seed: derive_seed(env.seed, &[TX_STREAM, stream, row as u64, col as u64, i as u64]),
        })
        .collect()
}

fn detect(
    cfg: &ExperimentConfig,
    table: &McsTable,
    net: &Network<f32>,
    tx: &Transmission,
) -> Result<u8> {
    let entry = table.lookup(u32::from(tx.mcs))?;
    let n = cfg.dataset.window_len;
    let clean = generate_baseband(&entry, &cfg.signal, n, derive_seed(tx.seed, &[1]))?;
    let noisy = apply_awgn(&clean, tx.sinr_db, derive_seed(tx.seed, &[2]))?;
    let window = ExampleWindow::<f32>::from_samples(noisy.samples(), 0);
    let class = net.classify(&window.data)?;
    Ok(cfg.dataset.mcs_of(class)?)
}

fn save_map(map: &McsMap, out: &Path, stem: &str) -> Result<()> {
    write_atomic(&out.join(format!("{stem}.json")), map.to_json().as_bytes())?;
    write_atomic(&out.join(format!("{stem}.svg")), map.to_svg().as_bytes())?;
    Ok(())
}

pub fn run(
    cfg: &ExperimentConfig,
    table: &McsTable,
    out: &Path,
    ckpt: &Path,
    jobs: usize,
) -> Result<LocateSummary> {
    let lc = &cfg.localization;
    if let Some(m) = cfg.dataset.mcs_values.iter().find(|m| !(MCS_LO..=MCS_HI).contains(*m)) {
        return Err(Error::Validation(format!(
            "localization maps MCS {MCS_LO}..={MCS_HI}, but the classifier emits MCS {m}"
        ))
        .into());
    }
    let net = checkpoint::load(ckpt)?;
    if net.config().n_classes != cfg.dataset.n_classes() {
        return Err(Error::Validation(format!(
            "checkpoint has {} classes but the config lists {} MCS values",
            net.config().n_classes,
            cfg.dataset.n_classes()
        ))
        .into());
    }
    let (rows, cols) = (lc.rows, lc.cols);
    let n_tiles = rows * cols;
    let true_map = simulate_environment(&cfg.environment, rows, cols, lc.survey_transmissions_per_tile)?;

    // survey transmissions first, then every test position, tile-major
    let mut txs = Vec::new();
    for t in 0..n_tiles {
        txs.extend(transmissions(cfg, t / cols, t % cols, SURVEY_STREAM, lc.survey_transmissions_per_tile));
    }
    let survey_len = txs.len();
    for t in 0..n_tiles {
        for p in 0..lc.test_positions_per_tile {
            txs.extend(transmissions(cfg, t / cols, t % cols, 1 + p as u64, lc.detections_per_position));
        }
    }
    eprintln!("classifying {} transmissions", txs.len());
    let detected = with_jobs(jobs, || {
        txs.par_iter().map(|tx| detect(cfg, table, &net, tx)).collect::<Result<Vec<u8>>>()
    })??;

    let s = lc.survey_transmissions_per_tile;
    let survey_true: Vec<Vec<u8>> = txs[..survey_len].chunks(s).map(|c| c.iter().map(|t| t.mcs).collect()).collect();
    let survey_detected: Vec<Vec<u8>> = detected[..survey_len].chunks(s).map(<[u8]>::to_vec).collect();
    let mut true_survey_map = build_map(rows, cols, &survey_true)?;
    true_survey_map.tile_size_m = cfg.environment.tile_size_m;
    debug_assert_eq!(true_survey_map, true_map);
    let mut detected_map = build_map(rows, cols, &survey_detected)?;
    detected_map.tile_size_m = cfg.environment.tile_size_m;
    let fingerprint = match lc.fingerprint {
        Fingerprint::Detected => &detected_map,
        Fingerprint::True => &true_map,
    };

    let k = lc.detections_per_position;
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for (i, obs) in detected[survey_len..].chunks(k).enumerate() {
        let tile = i / lc.test_positions_per_tile;
        let found = locate(fingerprint, obs, lc.alpha)?;
        truth.push((tile / cols, tile % cols));
        predicted.push((found.row, found.col));
    }

    let factor = lc.merge_factor;
    let (mrows, mcols) = (rows.div_ceil(factor), cols.div_ceil(factor));
    let coarse = |p: (usize, usize)| coarsen_index(p.0, p.1, factor, rows, cols);
    let mtruth = truth.iter().map(|&p| coarse(p)).collect::<mcsloc_core::Result<Vec<_>>>()?;
    let mpred = predicted.iter().map(|&p| coarse(p)).collect::<mcsloc_core::Result<Vec<_>>>()?;
    let ids = |v: &[(usize, usize)], c: usize| v.iter().map(|&(r, q)| (r * c + q) as u32).collect::<Vec<u32>>();
    let neighbor = |a: &[(usize, usize)], b: &[(usize, usize)]| {
        a.iter().zip(b).filter(|(x, y)| chebyshev(**x, **y) <= 1).count() as f64 / a.len() as f64
    };

    let tile_cm = confusion(&ids(&truth, cols), &ids(&predicted, cols), &(0..n_tiles as u32).collect::<Vec<_>>())?;
    let merged_cm = confusion(
        &ids(&mtruth, mcols),
        &ids(&mpred, mcols),
        &(0..(mrows * mcols) as u32).collect::<Vec<_>>(),
    )?;
    let test_true: Vec<u32> = txs[survey_len..].iter().map(|t| u32::from(t.mcs)).collect();
    let test_detected: Vec<u32> = detected[survey_len..].iter().map(|&m| u32::from(m)).collect();
    let mcs_labels: Vec<u32> = (u32::from(MCS_LO)..=u32::from(MCS_HI)).collect();
    let detection_cm = confusion(&test_true, &test_detected, &mcs_labels)?;

    let summary = LocateSummary {
        rows,
        cols,
        merged_rows: mrows,
        merged_cols: mcols,
        fingerprint: lc.fingerprint,
        positions: truth.len(),
        detections_per_position: k,
        exact_accuracy: accuracy(&tile_cm)?,
        neighbor_accuracy: neighbor(&truth, &predicted),
        merged_exact_accuracy: accuracy(&merged_cm)?,
        merged_neighbor_accuracy: neighbor(&mtruth, &mpred),
        chance_exact: 1.0 / n_tiles as f64,
        detection_accuracy: accuracy(&detection_cm)?,
    };

    save_map(&true_map, out, "mcs_map")?;
    save_map(&detected_map, out, "survey_map")?;
    save_map(&merge_tiles(fingerprint, factor)?, out, "fingerprint_map_merged")?;
    emit_reports(&tile_cm, &out.join("tile_confusion"))?;
    emit_reports(&merged_cm, &out.join("tile_confusion_merged"))?;
    emit_reports(&detection_cm, &out.join("locate_mcs_confusion"))?;
    write_atomic(&out.join(SUMMARY), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!(
        "exact {:.4} (chance {:.4}), 1-neighbor {:.4}; merged {}x{}: exact {:.4}, 1-neighbor {:.4}; MCS detection {:.4}",
        summary.exact_accuracy,
        summary.chance_exact,
        summary.neighbor_accuracy,
        mrows,
        mcols,
        summary.merged_exact_accuracy,
        summary.merged_neighbor_accuracy,
        summary.detection_accuracy
    );
    Ok(summary)
}
