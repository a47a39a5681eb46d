use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Encoder;

/// Streaming extrema of latent values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunningRange {
    pub min_seen: f64,
    pub max_seen: f64,
    pub count: u64,
}

impl Default for RunningRange {
    fn default() -> Self {
        Self {
            min_seen: f64::INFINITY,
            max_seen: f64::NEG_INFINITY,
            count: 0,
        }
    }
}

impl RunningRange {
    pub fn update(&mut self, values: impl IntoIterator<Item = f64>) -> Result<()> {
        for v in values {
            if !v.is_finite() {
                return Err(Error::Calibration(format!("non-finite latent value {v}")));
            }
            self.min_seen = self.min_seen.min(v);
            self.max_seen = self.max_seen.max(v);
            self.count += 1;
        }
        Ok(())
    }

    pub fn update_tensor(&mut self, t: &Tensor) -> Result<()> {
        self.update(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
    }

    /// `(max - min) / 2`; errors when nothing or a single value was seen.
    pub fn half_range(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::Calibration("no latent values observed".into()));
        }
        let half = (self.max_seen - self.min_seen) / 2.0;
        if half <= 0.0 {
            return Err(Error::Calibration(format!(
                "latent range is zero (all values {})",
                self.min_seen
            )));
        }
        Ok(half)
    }
}

/// Half the value range of `mu` over the warmup image batches.
pub fn calibrate_delta(encoder: &Encoder, warmup: &[Tensor]) -> Result<f64> {
    if warmup.is_empty() {
        return Err(Error::Calibration("at least one warmup batch is required".into()));
    }
    let mut range = RunningRange::default();
    for batch in warmup {
        let (mu, _) = encoder.forward(batch)?;
        range.update_tensor(&mu)?;
    }
    range.half_range()
}
