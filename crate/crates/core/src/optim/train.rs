use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamW, AdamWConfig, OneCycleConfig};
use crate::checkpoint;
use crate::dataset::ExampleWindow;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;
use crate::tcn::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            seed: 1,
            checkpoint_every: 0,
            checkpoint_dir: None,
            grad_clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "training needs at least one epoch and a positive batch size".into(),
            ));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Validation(format!("grad_clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used by the epoch's last step.
    pub lr_last: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_accuracy,lr_last";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.lr_last
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Mean cross-entropy and accuracy of `net` over `windows`; NaN for an empty set.
pub fn evaluate<T: Scalar>(net: &Network<T>, windows: &[ExampleWindow<T>]) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for w in windows {
        let p = net.predict(&w.data)?;
        loss -= p[w.label].to_f64_lossy().max(1e-12).ln();
        if argmax(&p) == w.label {
            correct += 1;
        }
    }
    let n = windows.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn clip<T: Scalar>(grads: &mut Network<T>, max_norm: f64) {
    let sq: f64 = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|x| x.to_f64_lossy().powi(2))
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = T::of(max_norm / norm);
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }
}

pub fn train<T: Scalar>(
    net: Network<T>,
    train_set: &[ExampleWindow<T>],
    val_set: &[ExampleWindow<T>],
    tcfg: &TrainConfig,
    schedule: &OneCycleConfig,
    adamw: &AdamWConfig,
) -> Result<(Network<T>, History)> {
    train_with_observer(net, train_set, val_set, tcfg, schedule, adamw, |_, _| Ok(()))
}

/// Mini-batch training with a per-epoch seeded shuffle. `observe` runs after
/// every epoch. The schedule's `total_steps` is replaced by
/// `epochs * ceil(n_train / batch_size)`.
pub fn train_with_observer<T: Scalar, F>(
    mut net: Network<T>,
    train_set: &[ExampleWindow<T>],
    val_set: &[ExampleWindow<T>],
    tcfg: &TrainConfig,
    schedule: &OneCycleConfig,
    adamw: &AdamWConfig,
    mut observe: F,
) -> Result<(Network<T>, History)>
where
    F: FnMut(&EpochRecord, &Network<T>) -> Result<()>,
{
    tcfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let n = train_set.len();
    let schedule = OneCycleConfig {
        total_steps: tcfg.epochs * tcfg.steps_per_epoch(n),
        ..schedule.clone()
    };
    schedule.validate()?;
    let mut opt = AdamW::new(adamw.clone(), &net)?;
    let mut history = History::default();
    let mut grads = net.zeros_like();
    let mut step = 0usize;

    for epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(tcfg.seed, &[0x5348_5546, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            for (_, g) in grads.tensors_mut() {
                g.iter_mut().for_each(|x| *x = T::zero());
            }
            let scale = T::of(1.0 / batch.len() as f64);
            for &i in batch {
                let w = &train_set[i];
                let (loss, _) = net.accumulate_example(&w.data, w.label, scale, &mut grads)?;
                let loss = loss.to_f64_lossy();
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {} step {step}",
                        epoch + 1
                    )));
                }
                loss_sum += loss;
            }
            if let Some(c) = tcfg.grad_clip_norm {
                clip(&mut grads, c);
            }
            lr = schedule.lr_at(step)?;
            opt.step(&mut net, &grads, lr)?;
            step += 1;
        }
        let (val_loss, val_accuracy) = evaluate(&net, val_set)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            val_loss,
            val_accuracy,
            lr_last: lr,
        };
        history.records.push(record);
        if let (Some(dir), true) = (&tcfg.checkpoint_dir, tcfg.checkpoint_every > 0) {
            if (epoch + 1) % tcfg.checkpoint_every == 0 {
                checkpoint::save(&net, &dir.join(format!("epoch_{:03}.ckpt", epoch + 1)))?;
            }
        }
        observe(&record, &net)?;
    }
    Ok((net, history))
}
