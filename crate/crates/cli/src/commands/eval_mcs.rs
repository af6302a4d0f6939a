use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use mcsloc_core::eval::{accuracy, confusion, emit_reports, ConfusionMatrix};
use mcsloc_core::mcs::McsTable;
use mcsloc_core::{checkpoint, Error};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::workspace::{load_split_windows, with_jobs, write_atomic, Manifest};

pub const SUMMARY: &str = "eval_mcs.json";
pub const CONFUSION: &str = "mcs_confusion";
pub const GROUP_CONFUSION: &str = "mcs_group_confusion";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub windows: usize,
    pub labels: Vec<u32>,
    pub accuracy: f64,
    /// Accuracy after mapping every MCS to its modulation order.
    pub group_accuracy: f64,
    /// Best top-1 accuracy of any rule that sees only the modulation group:
    /// per group, the share of its most frequent MCS.
    pub group_ceiling: f64,
}

/// Top-1 accuracy reachable when only the modulation group is known.
pub fn group_ceiling(cm: &ConfusionMatrix, group_of: impl Fn(u32) -> u32) -> f64 {
    let mut best: BTreeMap<u32, u64> = BTreeMap::new();
    for (label, n) in cm.labels.iter().zip(cm.row_sums()) {
        let e = best.entry(group_of(*label)).or_default();
        *e = (*e).max(n);
    }
    best.values().sum::<u64>() as f64 / cm.total() as f64
}

pub fn modulation_order(table: &McsTable, mcs: u32) -> u32 {
    table.lookup(mcs).map(|e| u32::from(e.modulation_order)).unwrap_or(0)
}

pub fn run(
    table: &McsTable,
    out: &Path,
    dataset_dir: &Path,
    ckpt: &Path,
    jobs: usize,
) -> Result<EvalSummary> {
    let net = checkpoint::load(ckpt)?;
    let manifest = Manifest::load(dataset_dir)?;
    let spec = &manifest.dataset;
    if net.config().n_classes != spec.n_classes() {
        return Err(Error::Validation(format!(
            "checkpoint has {} classes but the dataset has {}",
            net.config().n_classes,
            spec.n_classes()
        ))
        .into());
    }
    let (_, val) = with_jobs(jobs, || load_split_windows(dataset_dir, &manifest, false))??;
    let predicted = with_jobs(jobs, || {
        val.par_iter()
            .map(|w| net.classify(&w.data))
            .collect::<mcsloc_core::Result<Vec<usize>>>()
    })??;

    let labels: Vec<u32> = spec.mcs_values.iter().map(|&m| u32::from(m)).collect();
    let truth: Vec<u32> = val.iter().map(|w| labels[w.label]).collect();
    let pred: Vec<u32> = predicted.iter().map(|&p| labels[p]).collect();
    let cm = confusion(&truth, &pred, &labels)?;
    let group_of = |mcs: u32| modulation_order(table, mcs);
    let mut groups: Vec<u32> = labels.iter().map(|&l| group_of(l)).collect();
    groups.dedup();
    let grouped = cm.grouped(&groups, group_of)?;

    let summary = EvalSummary {
        windows: val.len(),
        labels,
        accuracy: accuracy(&cm)?,
        group_accuracy: accuracy(&grouped)?,
        group_ceiling: group_ceiling(&cm, group_of),
    };
    emit_reports(&cm, &out.join(CONFUSION))?;
    emit_reports(&grouped, &out.join(GROUP_CONFUSION))?;
    write_atomic(&out.join(SUMMARY), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    println!(
        "accuracy {:.4} over {} windows; group accuracy {:.4}; group-only ceiling {:.4}",
        summary.accuracy, summary.windows, summary.group_accuracy, summary.group_ceiling
    );
    Ok(summary)
}
