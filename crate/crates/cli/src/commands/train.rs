use std::path::Path;

use anyhow::Result;
use mcsloc_core::checkpoint;
use mcsloc_core::optim::{self, History};
use mcsloc_core::seed::derive_seed;
use mcsloc_core::tcn::{parameter_count, Network};
use mcsloc_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::workspace::{load_split_windows, with_jobs, write_atomic, Manifest};

pub const HISTORY: &str = "history.csv";
pub const SUMMARY: &str = "train_summary.json";
const INIT_STREAM: u64 = 0x494e4954;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub parameter_count: usize,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub final_val_accuracy: f64,
}

pub fn run(
    cfg: &ExperimentConfig,
    out: &Path,
    dataset_dir: &Path,
    ckpt: &Path,
    jobs: usize,
) -> Result<(History, TrainSummary)> {
    let manifest = Manifest::load(dataset_dir)?;
    if manifest.dataset.n_classes() != cfg.network.n_classes {
        return Err(Error::Validation(format!(
            "dataset has {} classes, network config {}",
            manifest.dataset.n_classes(),
            cfg.network.n_classes
        ))
        .into());
    }
    let (train_set, val_set) = with_jobs(jobs, || load_split_windows(dataset_dir, &manifest, true))??;
    eprintln!(
        "training on {} windows, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let net = Network::<f32>::new(cfg.network.clone(), derive_seed(cfg.train.seed, &[INIT_STREAM]))?;
    let mut tcfg = cfg.train.clone();
    if tcfg.checkpoint_every > 0 && tcfg.checkpoint_dir.is_none() {
        let dir = out.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        tcfg.checkpoint_dir = Some(dir);
    }
    let (net, history) = optim::train_with_observer(
        net,
        &train_set,
        &val_set,
        &tcfg,
        &cfg.one_cycle,
        &cfg.adamw,
        |r, _| {
            eprintln!(
                "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}  lr {:.3e}",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.lr_last
            );
            Ok(())
        },
    )?;
    let last = *history.last().expect("at least one epoch");
    let summary = TrainSummary {
        epochs: history.records.len(),
        train_windows: train_set.len(),
        val_windows: val_set.len(),
        parameter_count: parameter_count(net.config()),
        final_train_loss: last.train_loss,
        final_val_loss: last.val_loss,
        final_val_accuracy: last.val_accuracy,
    };
    write_atomic(ckpt, &checkpoint::to_bytes(&net))?;
    write_atomic(&out.join(HISTORY), history.to_csv().as_bytes())?;
    write_atomic(&out.join(SUMMARY), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    eprintln!("checkpoint written to {}", ckpt.display());
    Ok((history, summary))
}
