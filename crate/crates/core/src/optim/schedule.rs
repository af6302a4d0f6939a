use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two cosine phases: warm up from `max_lr / div_factor` to `max_lr` over the
/// first `round(pct_start * total_steps)` steps, then anneal to
/// `max_lr / div_factor / final_div_factor` at `total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneCycleConfig {
    pub max_lr: f64,
    /// Overwritten by the training loop with `epochs * batches_per_epoch`.
    pub total_steps: usize,
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

impl Default for OneCycleConfig {
    fn default() -> Self {
        Self {
            max_lr: 1e-2,
            total_steps: 1,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }
}

fn cosine(start: f64, end: f64, frac: f64) -> f64 {
    end + (start - end) / 2.0 * (1.0 + (PI * frac).cos())
}

impl OneCycleConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("1cycle schedule: {m}")));
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return fail(format!("max_lr must be positive, got {}", self.max_lr));
        }
        if self.total_steps == 0 {
            return fail("total_steps must be at least 1".into());
        }
        if !(self.pct_start > 0.0 && self.pct_start < 1.0) {
            return fail(format!("pct_start must lie in (0, 1), got {}", self.pct_start));
        }
        if !(self.div_factor > 1.0 && self.final_div_factor > 1.0) {
            return fail("div factors must exceed 1".into());
        }
        Ok(())
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.div_factor
    }

    pub fn min_lr(&self) -> f64 {
        self.initial_lr() / self.final_div_factor
    }

    /// Step at which the rate peaks.
    pub fn peak_step(&self) -> usize {
        ((self.pct_start * self.total_steps as f64).round() as usize).min(self.total_steps)
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::Domain(format!(
                "step {step} beyond total_steps {}",
                self.total_steps
            )));
        }
        let peak = self.peak_step();
        if step <= peak && peak > 0 {
            Ok(cosine(self.initial_lr(), self.max_lr, step as f64 / peak as f64))
        } else {
            let span = (self.total_steps - peak) as f64;
            Ok(cosine(self.max_lr, self.min_lr(), (step - peak) as f64 / span))
        }
    }
}

pub fn lr_at(cfg: &OneCycleConfig, step: usize) -> Result<f64> {
    cfg.lr_at(step)
}
