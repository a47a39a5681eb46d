use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use candle_nn::{VarBuilder, VarMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::modules::ClassifierNet;
use super::{image_batch, init_parameters, named_vars};
use crate::error::{Error, Result};
use crate::objective::bce_with_logits;
use crate::optim::{Adam, AdamConfig};
use crate::store::{self, Metadata};
use crate::synthdata::{Attribute, Sample};

const FORMAT: &str = "maskedit-classifier";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    /// Identity classifier; its features are the frozen identity embedding.
    Identity,
    /// Multi-label attribute classifier used as the evaluation oracle.
    Attributes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassifierMeta {
    pub kind: ClassifierKind,
    pub version: u32,
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub features: usize,
    pub outputs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// A classifier with frozen weights: parameters are plain tensors, so
/// gradients reach the input but never the weights.
#[derive(Clone, Debug)]
pub struct Classifier {
    meta: ClassifierMeta,
    net: ClassifierNet,
    tensors: HashMap<String, Tensor>,
}

impl Classifier {
    pub fn from_tensors(meta: ClassifierMeta, tensors: HashMap<String, Tensor>, device: &Device) -> Result<Self> {
        let tensors: HashMap<String, Tensor> = tensors
            .into_iter()
            .map(|(k, v)| Ok((k, v.to_dtype(DType::F32)?.detach())))
            .collect::<Result<_>>()?;
        let vb = VarBuilder::from_tensors(tensors.clone(), DType::F32, device);
        let net = ClassifierNet::new(meta.input_size, &meta.channels, meta.features, meta.outputs, vb)?;
        Ok(Self { meta, net, tensors })
    }

    pub fn load(path: &Path, device: &Device) -> Result<Self> {
        let (tensors, metadata) = store::load(path, device)?;
        Self::from_parts(tensors, metadata, device)
    }

    pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        let (tensors, metadata) = store::from_bytes(bytes, device)?;
        Self::from_parts(tensors, metadata, device)
    }

    fn from_parts(tensors: HashMap<String, Tensor>, metadata: Metadata, device: &Device) -> Result<Self> {
        if store::require(&metadata, "format")? != FORMAT {
            return Err(Error::Checkpoint("not a classifier file".into()));
        }
        let meta: ClassifierMeta = serde_json::from_str(store::require(&metadata, "meta")?)?;
        if meta.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "classifier version {} unsupported (expected {VERSION})",
                meta.version
            )));
        }
        Self::from_tensors(meta, tensors, device)
    }

    pub fn meta(&self) -> &ClassifierMeta {
        &self.meta
    }

    pub fn kind(&self) -> ClassifierKind {
        self.meta.kind
    }

    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.net.features(x)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.net.logits(x)
    }

    /// Per-attribute probabilities `[batch, 4]` (attribute classifiers only).
    pub fn attribute_probabilities(&self, x: &Tensor) -> Result<Tensor> {
        if self.meta.kind != ClassifierKind::Attributes {
            return Err(Error::Config("classifier does not predict attributes".into()));
        }
        Ok(candle_nn::ops::sigmoid(&self.logits(x)?)?)
    }

    pub fn predict_identity(&self, x: &Tensor) -> Result<Vec<u32>> {
        Ok(self.logits(x)?.argmax(D::Minus1)?.to_vec1::<u32>()?)
    }

    pub fn checksum(&self) -> Result<u64> {
        store::checksum(&self.tensors)
    }
}

/// Freshly trained classifier variables.
pub struct TrainedClassifier {
    pub meta: ClassifierMeta,
    pub vars: VarMap,
}

impl TrainedClassifier {
    fn tensors(&self) -> HashMap<String, Tensor> {
        named_vars(&self.vars)
            .into_iter()
            .map(|(k, v)| (k, v.as_tensor().clone()))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let metadata: Metadata = [
            ("format".to_string(), FORMAT.to_string()),
            ("meta".to_string(), serde_json::to_string(&self.meta)?),
        ]
        .into();
        store::save(path, &self.tensors(), metadata)
    }

    pub fn frozen(&self, device: &Device) -> Result<Classifier> {
        Classifier::from_tensors(self.meta.clone(), self.tensors(), device)
    }
}

fn targets(batch: &[&Sample], kind: ClassifierKind, device: &Device) -> Result<Tensor> {
    Ok(match kind {
        ClassifierKind::Identity => {
            let ids: Vec<u32> = batch.iter().map(|s| s.identity_id as u32).collect();
            Tensor::from_vec(ids, batch.len(), device)?
        }
        ClassifierKind::Attributes => {
            let flags: Vec<f32> = batch
                .iter()
                .flat_map(|s| Attribute::ALL.map(|a| s.attributes.get(a) as u8 as f32))
                .collect();
            Tensor::from_vec(flags, (batch.len(), Attribute::COUNT), device)?
        }
    })
}

/// Trains an identity or attribute classifier on `samples`.
pub fn train_classifier(
    samples: &[Sample],
    kind: ClassifierKind,
    network: &NetworkConfig,
    config: &PretrainConfig,
    device: &Device,
) -> Result<TrainedClassifier> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to train on".into()));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("epochs and batchSize must be at least 1".into()));
    }
    let outputs = match kind {
        ClassifierKind::Identity => samples.iter().map(|s| s.identity_id as usize).max().unwrap_or(0) + 1,
        ClassifierKind::Attributes => Attribute::COUNT,
    };
    let meta = ClassifierMeta {
        kind,
        version: VERSION,
        input_size: network.input_size,
        channels: network.classifier_channels.clone(),
        features: network.classifier_features,
        outputs,
    };
    let vars = VarMap::new();
    let vb = VarBuilder::from_varmap(&vars, DType::F32, device);
    let net = ClassifierNet::new(meta.input_size, &meta.channels, meta.features, meta.outputs, vb)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_parameters(&vars, &mut rng)?;
    let mut opt = Adam::new(named_vars(&vars), AdamConfig::with_lr(config.lr))?;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let x = image_batch(batch.iter().copied(), device)?;
            let logits = net.logits(&x)?;
            let t = targets(&batch, kind, device)?;
            let loss = match kind {
                ClassifierKind::Identity => candle_nn::loss::cross_entropy(&logits, &t)?,
                ClassifierKind::Attributes => bce_with_logits(&logits, &t)?,
            };
            total += loss.to_scalar::<f32>()? as f64;
            batches += 1;
            opt.step(&loss.backward()?)?;
        }
        log::debug!("{kind:?} classifier epoch {epoch}: loss {:.4}", total / batches as f64);
    }
    Ok(TrainedClassifier { meta, vars })
}
