use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tcn::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Validation(format!(
                "adamw betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Validation(
                "adamw epsilon must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Anything exposing named, flat parameter tensors in a stable order.
pub trait Parameters<T> {
    fn param_slices(&self) -> Vec<(String, &[T])>;
    fn param_slices_mut(&mut self) -> Vec<(String, &mut [T])>;
}

impl<T: Scalar> Parameters<T> for Network<T> {
    fn param_slices(&self) -> Vec<(String, &[T])> {
        self.tensors().into_iter().map(|t| (t.name, t.data)).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<(String, &mut [T])> {
        self.tensors_mut()
    }
}

impl<T> Parameters<T> for Vec<Vec<T>> {
    fn param_slices(&self) -> Vec<(String, &[T])> {
        self.iter()
            .enumerate()
            .map(|(i, v)| (format!("tensor{i}"), v.as_slice()))
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<(String, &mut [T])> {
        self.iter_mut()
            .enumerate()
            .map(|(i, v)| (format!("tensor{i}"), v.as_mut_slice()))
            .collect()
    }
}

/// One decoupled-decay Adam update of a single tensor at 1-based `step`.
///
/// Decay is applied first, `theta -= lr * wd * theta`, followed by the
/// bias-corrected Adam step.
pub fn adamw_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    cfg: &AdamWConfig,
    lr: f64,
) {
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let eps = T::of(cfg.epsilon);
    let lr = T::of(lr);
    let decay = lr * T::of(cfg.weight_decay);
    let t = step.min(i32::MAX as u64) as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    for (((p, &g), m), v) in theta.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - decay * *p;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// AdamW state: first and second moments per tensor and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    cfg: AdamWConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new<P: Parameters<T>>(cfg: AdamWConfig, params: &P) -> Result<Self> {
        cfg.validate()?;
        let zeros: Vec<Vec<T>> = params
            .param_slices()
            .iter()
            .map(|(_, s)| vec![T::zero(); s.len()])
            .collect();
        Ok(Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }

    /// Applies one update. Nothing is modified if any gradient entry is
    /// non-finite or the layouts disagree.
    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Domain(format!("learning rate {lr}")));
        }
        let g = grads.param_slices();
        if g.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} optimizer slots",
                g.len(),
                self.m.len()
            )));
        }
        for ((name, gs), m) in g.iter().zip(&self.m) {
            if gs.len() != m.len() {
                return Err(Error::Shape(format!(
                    "gradient {name} has {} entries, expected {}",
                    gs.len(),
                    m.len()
                )));
            }
            if let Some(bad) = gs.iter().find(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient {bad} in {name}")));
            }
        }
        let mut p = params.param_slices_mut();
        if p.len() != g.len() || p.iter().zip(&g).any(|(a, b)| a.1.len() != b.1.len()) {
            return Err(Error::Shape("parameter layout differs from gradients".into()));
        }
        self.t += 1;
        for (i, ((_, theta), (_, gs))) in p.iter_mut().zip(&g).enumerate() {
            adamw_update(theta, gs, &mut self.m[i], &mut self.v[i], self.t, &self.cfg, lr);
        }
        Ok(())
    }
}
