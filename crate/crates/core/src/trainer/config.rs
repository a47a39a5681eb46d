use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::NetworkConfig;
use crate::objective::LossWeights;
use crate::synthdata::Attribute;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeltaMode {
    Fixed,
    HalfRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeltaCalibration {
    pub mode: DeltaMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub warmup_batches: usize,
}

impl Default for DeltaCalibration {
    fn default() -> Self {
        Self {
            mode: DeltaMode::HalfRange,
            value: None,
            warmup_batches: 4,
        }
    }
}

/// Order of the two hops in the cycle branches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CycleOrder {
    /// `x` (has the attribute) goes `-δ` then `+δ`; `y` goes `+δ` then `-δ`.
    #[default]
    PolarityAware,
    /// `x` goes `+δ` then `-δ`; `y` goes `-δ` then `+δ`.
    Literal,
}

impl CycleOrder {
    /// First-hop sign for an image that has (`true`) or lacks the attribute.
    pub fn first_sign(self, has_attribute: bool) -> f64 {
        match (self, has_attribute) {
            (CycleOrder::PolarityAware, true) | (CycleOrder::Literal, false) => -1.0,
            _ => 1.0,
        }
    }
}

/// Which latent positions receive the edit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PixelSelection {
    #[default]
    MinimalCover,
    EntireMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub dataset_path: PathBuf,
    pub attributes: Vec<Attribute>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    #[serde(default)]
    pub delta_calibration: DeltaCalibration,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Frozen identity classifier for the ID loss; required when `alpha3 > 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity_classifier: Option<PathBuf>,
    #[serde(default)]
    pub cycle_order: CycleOrder,
    /// Feed manipulated outputs to the discriminator as fakes too.
    #[serde(default)]
    pub manipulated_as_fake: bool,
    #[serde(default)]
    pub pixel_selection: PixelSelection,
    /// Use at most this many training samples (in manifest order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_train_samples: Option<usize>,
    /// Validation images used for the best-checkpoint cycle error.
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
}

fn default_validation_samples() -> usize {
    64
}

/// Weights used by the training entry points unless overridden.
pub fn tuned_weights() -> LossWeights {
    LossWeights {
        lambda1: 0.002,
        lambda2: 1.0,
        alpha1: 1.0,
        alpha2: 0.02,
        alpha3: 0.01,
        alpha4: 1.0,
        alpha5: 4.0,
        alpha_attr: 0.2,
    }
}

impl TrainConfig {
    pub fn new(dataset_path: impl Into<PathBuf>, checkpoint_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            attributes: vec![Attribute::HairBlond],
            epochs: 30,
            batch_size: 32,
            lr_generator: 1e-3,
            lr_discriminator: 2e-4,
            weights: tuned_weights(),
            seed: 0,
            checkpoint_dir: checkpoint_dir.into(),
            delta_calibration: DeltaCalibration::default(),
            network: NetworkConfig::default(),
            identity_classifier: None,
            cycle_order: CycleOrder::default(),
            manipulated_as_fake: false,
            pixel_selection: PixelSelection::default(),
            max_train_samples: None,
            validation_samples: default_validation_samples(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || self.delta_calibration.warmup_batches < 1 {
            return Err(Error::Config(
                "epochs, batchSize and warmupBatches must be at least 1".into(),
            ));
        }
        for (name, lr) in [("lrGenerator", self.lr_generator), ("lrDiscriminator", self.lr_discriminator)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("at least one attribute must be trained".into()));
        }
        self.weights.validate()?;
        self.network.validate()?;
        let calib = &self.delta_calibration;
        match (calib.mode, calib.value) {
            (DeltaMode::Fixed, None) => {
                return Err(Error::Config("fixed delta calibration needs a value".into()))
            }
            (DeltaMode::Fixed, Some(v)) if !v.is_finite() || v <= 0.0 => {
                return Err(Error::Config(format!("fixed delta must be positive, got {v}")))
            }
            _ => {}
        }
        if self.weights.alpha3 > 0.0 && self.identity_classifier.is_none() {
            return Err(Error::Config(
                "alpha3 > 0 needs an identity classifier (identityClassifier)".into(),
            ));
        }
        Ok(())
    }
}
