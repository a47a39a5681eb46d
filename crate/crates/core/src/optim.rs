//! Adam with inspectable, serializable moment estimates.

use std::collections::HashMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Slot {
    name: String,
    var: Var,
    m: Tensor,
    v: Tensor,
}

pub struct Adam {
    config: AdamConfig,
    slots: Vec<Slot>,
    step: u64,
}

impl Adam {
    /// `params` are updated in name order.
    pub fn new(mut params: Vec<(String, Var)>, config: AdamConfig) -> Result<Self> {
        if !config.lr.is_finite() || config.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {}", config.lr)));
        }
        params.sort_by(|a, b| a.0.cmp(&b.0));
        let slots = params
            .into_iter()
            .map(|(name, var)| {
                let m = var.zeros_like()?;
                let v = var.zeros_like()?;
                Ok(Slot { name, var, m, v })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            slots,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            let g = g.detach();
            slot.m = ((&slot.m * beta1)? + (&g * (1.0 - beta1))?)?.detach();
            slot.v = ((&slot.v * beta2)? + (g.sqr()? * (1.0 - beta2))?)?.detach();
            let m_hat = (&slot.m / c1)?;
            let v_hat = (&slot.v / c2)?;
            let update = (m_hat / (v_hat.sqrt()? + eps)?)?;
            slot.var.set(&(slot.var.as_tensor().detach() - (update * lr)?)?)?;
        }
        Ok(())
    }

    /// Moment tensors keyed `m.<param>` / `v.<param>`.
    pub fn state_tensors(&self, prefix: &str) -> HashMap<String, Tensor> {
        self.slots
            .iter()
            .flat_map(|s| {
                [
                    (format!("{prefix}m.{}", s.name), s.m.clone()),
                    (format!("{prefix}v.{}", s.name), s.v.clone()),
                ]
            })
            .collect()
    }

    pub fn load_state(&mut self, tensors: &HashMap<String, Tensor>, prefix: &str, step: u64) -> Result<()> {
        for slot in &mut self.slots {
            for (key, dst) in [("m", &mut slot.m), ("v", &mut slot.v)] {
                let name = format!("{prefix}{key}.{}", slot.name);
                let t = tensors
                    .get(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state '{name}' missing")))?;
                if t.dims() != dst.dims() {
                    return Err(Error::Checkpoint(format!("optimizer state '{name}' has wrong shape")));
                }
                *dst = t.to_dtype(dst.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}
