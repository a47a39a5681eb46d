use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::VarBuilder;

use super::{TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::nets::{named_vars, Generator, ImageEditor, ManipulationSpec, NetworkConfig};
use crate::store::{self, Metadata};
use crate::synthdata::Attribute;

pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
const FORMAT: &str = "maskedit-checkpoint";
const VERSION: &str = "1";
const GEN: &str = "generator.";
const DISC: &str = "discriminator.";
const OPT_G: &str = "adam_g.";
const OPT_D: &str = "adam_d.";

fn prefixed(vars: Vec<(String, candle_core::Var)>, prefix: &str) -> impl Iterator<Item = (String, Tensor)> + '_ {
    vars.into_iter()
        .map(move |(k, v)| (format!("{prefix}{k}"), v.as_tensor().clone()))
}

fn strip(tensors: &HashMap<String, Tensor>, prefix: &str) -> HashMap<String, Tensor> {
    tensors
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
        .collect()
}

fn parse<T: serde::de::DeserializeOwned>(metadata: &Metadata, key: &str) -> Result<T> {
    serde_json::from_str(store::require(metadata, key)?)
        .map_err(|e| Error::Checkpoint(format!("metadata '{key}': {e}")))
}

fn check_format(metadata: &Metadata) -> Result<()> {
    if store::require(metadata, "format")? != FORMAT {
        return Err(Error::Checkpoint("not a training checkpoint".into()));
    }
    let version = store::require(metadata, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("checkpoint version {version} unsupported")));
    }
    Ok(())
}

fn copy_into(vars: Vec<(String, candle_core::Var)>, tensors: &HashMap<String, Tensor>) -> Result<()> {
    for (name, var) in vars {
        let t = tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("parameter '{name}' missing")))?;
        if t.dims() != var.dims() {
            return Err(Error::Checkpoint(format!("parameter '{name}' has the wrong shape")));
        }
        var.set(&t.to_dtype(var.dtype())?)?;
    }
    Ok(())
}

impl Trainer {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: HashMap<String, Tensor> = prefixed(named_vars(&self.nets.generator_vars), GEN)
            .chain(prefixed(named_vars(&self.nets.discriminator_vars), DISC))
            .collect();
        tensors.extend(self.opt_g.state_tensors(OPT_G));
        tensors.extend(self.opt_d.state_tensors(OPT_D));
        let metadata: Metadata = [
            ("format", FORMAT.to_string()),
            ("version", VERSION.to_string()),
            ("trainConfig", serde_json::to_string(&self.config)?),
            ("network", serde_json::to_string(&self.config.network)?),
            ("delta", serde_json::to_string(&self.delta)?),
            ("specs", serde_json::to_string(&self.specs)?),
            ("epoch", self.epoch.to_string()),
            ("step", self.step.to_string()),
            ("optimizerSteps", serde_json::to_string(&(self.opt_g.step_count(), self.opt_d.step_count()))?),
            ("rng", serde_json::to_string(&self.rng)?),
            ("bestCycleError", serde_json::to_string(&self.best_cycle_error)?),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        store::save(path, &tensors, metadata)
    }

    /// Loads parameters, optimizer moments, RNG and counters from `path`.
    pub fn restore(&mut self, path: &Path) -> Result<()> {
        let (tensors, metadata) = store::load(path, &self.device)?;
        check_format(&metadata)?;
        let network: NetworkConfig = parse(&metadata, "network")?;
        if network != self.config.network {
            return Err(Error::Checkpoint("checkpoint network differs from the configuration".into()));
        }
        copy_into(named_vars(&self.nets.generator_vars), &strip(&tensors, GEN))?;
        copy_into(named_vars(&self.nets.discriminator_vars), &strip(&tensors, DISC))?;
        let (steps_g, steps_d): (u64, u64) = parse(&metadata, "optimizerSteps")?;
        self.opt_g.load_state(&tensors, OPT_G, steps_g)?;
        self.opt_d.load_state(&tensors, OPT_D, steps_d)?;
        self.delta = parse(&metadata, "delta")?;
        self.specs = parse(&metadata, "specs")?;
        self.epoch = parse(&metadata, "epoch")?;
        self.step = parse(&metadata, "step")?;
        self.rng = parse(&metadata, "rng")?;
        self.best_cycle_error = parse(&metadata, "bestCycleError")?;
        Ok(())
    }
}

/// Newest `epoch_<n>/checkpoint.safetensors` under `dir`.
pub fn latest_epoch_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(n) = name
            .to_str()
            .and_then(|s| s.strip_prefix("epoch_"))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        let file = entry.path().join(CHECKPOINT_FILE);
        if file.exists() && best.as_ref().is_none_or(|(m, _)| n > *m) {
            best = Some((n, file));
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Generator plus edit defaults, loaded read-only from a checkpoint.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub generator: Generator,
    pub config: TrainConfig,
    pub delta: f64,
    pub specs: Vec<ManipulationSpec>,
    pub epoch: usize,
}

impl TrainedModel {
    pub fn load(path: &Path, device: &Device) -> Result<Self> {
        let (tensors, metadata) = store::load(path, device)?;
        Self::from_parts(tensors, metadata, device)
    }

    pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        let (tensors, metadata) = store::from_bytes(bytes, device)?;
        Self::from_parts(tensors, metadata, device)
    }

    fn from_parts(tensors: HashMap<String, Tensor>, metadata: Metadata, device: &Device) -> Result<Self> {
        check_format(&metadata)?;
        let config: TrainConfig = parse(&metadata, "trainConfig")?;
        let network: NetworkConfig = parse(&metadata, "network")?;
        let weights: HashMap<String, Tensor> = strip(&tensors, GEN)
            .into_iter()
            .map(|(k, v)| Ok((k, v.to_dtype(DType::F32)?)))
            .collect::<Result<_>>()?;
        let vb = VarBuilder::from_tensors(weights, DType::F32, device);
        let generator = Generator::new(&network, vb)?;
        Ok(Self {
            generator,
            config,
            delta: parse(&metadata, "delta")?,
            specs: parse(&metadata, "specs")?,
            epoch: parse(&metadata, "epoch")?,
        })
    }

    /// Edit spec for `attribute` at the checkpoint's pixel set and δ.
    pub fn spec(&self, attribute: Attribute) -> Result<ManipulationSpec> {
        if let Some(s) = self.specs.iter().find(|s| s.attribute == attribute) {
            return Ok(s.clone());
        }
        let pixel_set = self
            .specs
            .first()
            .map(|s| s.pixel_set.clone())
            .ok_or_else(|| Error::Checkpoint("checkpoint has no manipulation spec".into()))?;
        ManipulationSpec::new(&self.generator.config, attribute, self.delta, pixel_set)
    }
}

impl ImageEditor for TrainedModel {
    fn input_size(&self) -> usize {
        self.generator.input_size()
    }

    fn generate(&self, x: &Tensor, edit: Option<&ManipulationSpec>) -> Result<Tensor> {
        self.generator.generate(x, edit)
    }
}
