use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rfcover::{self, LayerSpec};
use crate::synthdata::Attribute;

/// A convolution layer: square geometry plus its output width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub channels: usize,
}

impl ConvLayer {
    pub const fn new(kernel: usize, stride: usize, padding: usize, channels: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            channels,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.kernel, self.stride, self.padding)
    }
}

/// Half-open channel index range `[start, end)` owned by one attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub start: usize,
    pub end: usize,
}

impl ChannelRange {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetworkConfig {
    pub input_size: usize,
    /// Encoder stack; the last layer's width is the latent channel count and
    /// is emitted twice (mean and log-variance).
    pub encoder_layers: Vec<ConvLayer>,
    pub latent_channels: usize,
    pub latent_spatial: usize,
    pub attribute_channel_groups: BTreeMap<Attribute, ChannelRange>,
    pub discriminator_channels: Vec<usize>,
    pub classifier_channels: Vec<usize>,
    pub classifier_features: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let groups = Attribute::ALL
            .iter()
            .map(|&a| {
                let start = 4 * a.index();
                (a, ChannelRange { start, end: start + 4 })
            })
            .collect();
        Self {
            input_size: 32,
            encoder_layers: vec![
                ConvLayer::new(4, 2, 1, 16),
                ConvLayer::new(4, 2, 1, 32),
                ConvLayer::new(4, 2, 1, 64),
                ConvLayer::new(3, 1, 1, 32),
            ],
            latent_channels: 32,
            latent_spatial: 4,
            attribute_channel_groups: groups,
            discriminator_channels: vec![16, 32, 64],
            classifier_channels: vec![16, 32, 64],
            classifier_features: 64,
        }
    }
}

impl NetworkConfig {
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.encoder_layers.iter().map(ConvLayer::spec).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .encoder_layers
            .last()
            .ok_or_else(|| Error::Config("encoder needs at least one layer".into()))?;
        if last.channels != self.latent_channels {
            return Err(Error::Config(format!(
                "last encoder layer has {} channels but latentChannels is {}",
                last.channels, self.latent_channels
            )));
        }
        let f = rfcover::feature_size(&self.layer_specs(), self.input_size)?;
        if f != self.latent_spatial {
            return Err(Error::Config(format!(
                "encoder maps {} pixels to {f}, but latentSpatial is {}",
                self.input_size, self.latent_spatial
            )));
        }
        // The mirrored decoder must land back on the input size.
        let n = self
            .encoder_layers
            .iter()
            .rev()
            .try_fold(f, |n, l| ((n - 1) * l.stride + l.kernel).checked_sub(2 * l.padding))
            .unwrap_or(0);
        if n != self.input_size {
            return Err(Error::Config(format!(
                "mirrored decoder produces {n} pixels, expected {}",
                self.input_size
            )));
        }
        let mut groups: Vec<(Attribute, ChannelRange)> =
            self.attribute_channel_groups.iter().map(|(&a, &r)| (a, r)).collect();
        groups.sort_by_key(|(_, r)| r.start);
        for (a, r) in &groups {
            if r.is_empty() || r.end > self.latent_channels {
                return Err(Error::Config(format!(
                    "channel group for {a} ({}..{}) must be non-empty and within 0..{}",
                    r.start, r.end, self.latent_channels
                )));
            }
        }
        if let Some(w) = groups.windows(2).find(|w| w[0].1.end > w[1].1.start) {
            return Err(Error::Config(format!(
                "channel groups for {} and {} overlap",
                w[0].0, w[1].0
            )));
        }
        for (name, widths) in [
            ("discriminator", &self.discriminator_channels),
            ("classifier", &self.classifier_channels),
        ] {
            conv_stack_output(self.input_size, widths.len())
                .ok_or_else(|| Error::Config(format!("{name} stack too deep for input")))?;
        }
        Ok(())
    }

    pub fn channel_group(&self, attribute: Attribute) -> Result<ChannelRange> {
        self.attribute_channel_groups
            .get(&attribute)
            .copied()
            .ok_or_else(|| Error::Config(format!("no latent channel group for {attribute}")))
    }

    pub fn latent_shape(&self) -> (usize, usize, usize) {
        (self.latent_channels, self.latent_spatial, self.latent_spatial)
    }
}

/// Spatial size after `depth` stride-2 k4 p1 layers.
pub(crate) fn conv_stack_output(input: usize, depth: usize) -> Option<usize> {
    (0..depth).try_fold(input, |n, _| LayerSpec::new(4, 2, 1).output_size(n).filter(|&o| o >= 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_consistent() {
        let cfg = NetworkConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.latent_shape(), (32, 4, 4));
    }

    #[test]
    fn latent_spatial_checked_against_geometry() {
        let cfg = NetworkConfig {
            latent_spatial: 8,
            ..NetworkConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overlapping_groups_rejected() {
        let mut cfg = NetworkConfig::default();
        cfg.attribute_channel_groups
            .insert(Attribute::Glasses, ChannelRange { start: 2, end: 6 });
        assert!(cfg.validate().unwrap_err().to_string().contains("overlap"));
    }

    #[test]
    fn group_beyond_latent_rejected() {
        let mut cfg = NetworkConfig::default();
        cfg.attribute_channel_groups
            .insert(Attribute::PaleSkin, ChannelRange { start: 30, end: 40 });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_uses_attribute_names() {
        let json = serde_json::to_string(&NetworkConfig::default()).unwrap();
        assert!(json.contains("\"hairBlond\""));
        let back: NetworkConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, NetworkConfig::default());
    }
}
