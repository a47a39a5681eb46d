use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::config::{ChannelRange, NetworkConfig};
use crate::error::{Error, Result};
use crate::rfcover::{self, PixelSet};
use crate::synthdata::Attribute;

/// Which latent entries an edit touches and by how much.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManipulationSpec {
    pub attribute: Attribute,
    pub delta: f64,
    pub pixel_set: PixelSet,
    pub channels: ChannelRange,
}

impl ManipulationSpec {
    /// Resolves the attribute's channel group and checks that `pixel_set`
    /// covers the input through the encoder geometry.
    pub fn new(
        config: &NetworkConfig,
        attribute: Attribute,
        delta: f64,
        pixel_set: PixelSet,
    ) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::Config(format!("delta must be finite, got {delta}")));
        }
        let channels = config.channel_group(attribute)?;
        if pixel_set.feature_size() != config.latent_spatial {
            return Err(Error::Geometry(format!(
                "pixel set is for a {}-wide map, latent is {}",
                pixel_set.feature_size(),
                config.latent_spatial
            )));
        }
        let rf = rfcover::compose_receptive_field(&config.layer_specs())?;
        if !rfcover::verify_coverage(&pixel_set, rf, config.input_size) {
            return Err(Error::Geometry(format!(
                "pixel set {:?} does not cover the {}-pixel input",
                pixel_set.axis_positions(),
                config.input_size
            )));
        }
        Ok(Self {
            attribute,
            delta,
            pixel_set,
            channels,
        })
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    /// `delta` rounded to `f32`, the value actually added to latents.
    pub fn applied_delta(&self) -> f64 {
        self.delta as f32 as f64
    }

    fn check_latent(&self, dims: &[usize]) -> Result<(usize, usize, usize, usize)> {
        let &[b, c, h, w] = dims else {
            return Err(Error::shape("[batch, C, F, F] latent", format!("{dims:?}")));
        };
        if self.channels.end > c {
            return Err(Error::Config(format!(
                "channel group {}..{} exceeds {c} latent channels",
                self.channels.start, self.channels.end
            )));
        }
        if let Some(&(r, col)) = self.pixel_set.positions2d().iter().find(|&&(r, col)| r >= h || col >= w) {
            return Err(Error::Geometry(format!(
                "pixel ({r}, {col}) outside {h}x{w} latent"
            )));
        }
        Ok((b, c, h, w))
    }

    /// Additive offset `[batch, C, F, F]` with `sign[i] * delta` on the
    /// selected entries of item `i`; used inside the differentiable graph.
    pub fn offset(&self, dims: &[usize], signs: &[f64], dtype: DType, device: &Device) -> Result<Tensor> {
        let (b, c, h, w) = self.check_latent(dims)?;
        if signs.len() != b {
            return Err(Error::shape(format!("{b} signs"), signs.len()));
        }
        let mut values = vec![0f64; b * c * h * w];
        for (i, sign) in signs.iter().enumerate() {
            for ch in self.channels.range() {
                for &(r, col) in self.pixel_set.positions2d() {
                    values[((i * c + ch) * h + r) * w + col] = sign * self.applied_delta();
                }
            }
        }
        Ok(Tensor::from_vec(values, (b, c, h, w), device)?.to_dtype(dtype)?)
    }
}

/// Adds `spec.delta` at every selected pixel of the attribute's channel group.
///
/// The delta is applied at `f32` precision and the sum is formed in `f64`,
/// returned as an `f64` tensor. For an `f32` latent the sum is then exact
/// whenever `z == 0` or `|z|` and `|delta|` are within a factor `2^28` of
/// each other, so `+delta` followed by `-delta` restores `z` bit for bit.
/// Entries outside the selection are copied unchanged.
pub fn manipulate(z: &Tensor, spec: &ManipulationSpec) -> Result<Tensor> {
    let (b, c, h, w) = spec.check_latent(z.dims())?;
    let delta = spec.applied_delta();
    let mut values = z.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    for i in 0..b {
        for ch in spec.channels.range() {
            for &(r, col) in spec.pixel_set.positions2d() {
                values[((i * c + ch) * h + r) * w + col] += delta;
            }
        }
    }
    Ok(Tensor::from_vec(values, (b, c, h, w), z.device())?)
}
