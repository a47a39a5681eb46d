//! Alternating generator / discriminator training, δ calibration,
//! checkpoints and the JSON-lines loss log.

mod calibrate;
mod checkpoint;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::ops::sigmoid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_delta, RunningRange};
pub use checkpoint::{latest_epoch_checkpoint, TrainedModel, CHECKPOINT_FILE};
pub use config::{
    tuned_weights, CycleOrder, DeltaCalibration, DeltaMode, PixelSelection, TrainConfig,
};

use crate::error::{Error, Result};
use crate::nets::{
    image_batch, mask_batch, named_vars, reparameterize, standard_normal, Classifier,
    ManipulationSpec, Networks,
};
use crate::objective::{self, scalar, LossReport};
use crate::optim::{Adam, AdamConfig};
use crate::rfcover::{self, PixelSet};
use crate::synthdata::{Attribute, Dataset, PairSampler, Sample, Split};

pub const LOG_FILE: &str = "train_log.jsonl";

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub attribute: Attribute,
    pub losses: LossReport,
}

/// Images of one step: `x` has the attribute, `y` lacks it.
pub struct PairBatch {
    pub attribute_slot: usize,
    pub x: Tensor,
    pub y: Tensor,
    pub masks: Tensor,
    pub labels: Tensor,
}

impl PairBatch {
    pub fn new(attribute_slot: usize, xs: &[&Sample], ys: &[&Sample], device: &Device) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::shape(format!("{} y images", xs.len()), ys.len()));
        }
        let all: Vec<&Sample> = xs.iter().chain(ys).copied().collect();
        let labels: Vec<f32> = all
            .iter()
            .flat_map(|s| Attribute::ALL.map(|a| s.attributes.get(a) as u8 as f32))
            .collect();
        Ok(Self {
            attribute_slot,
            x: image_batch(xs.iter().copied(), device)?,
            y: image_batch(ys.iter().copied(), device)?,
            masks: mask_batch(all.iter().copied(), device)?,
            labels: Tensor::from_vec(labels, (all.len(), Attribute::COUNT), device)?,
        })
    }
}

/// Pixel set implied by the network geometry and the selection mode.
pub fn pixel_set_for(network: &crate::nets::NetworkConfig, selection: PixelSelection) -> Result<PixelSet> {
    match selection {
        PixelSelection::EntireMap => Ok(PixelSet::full(network.latent_spatial)),
        PixelSelection::MinimalCover => {
            let rf = rfcover::compose_receptive_field(&network.layer_specs())?;
            rfcover::minimal_covering_set(rf, network.input_size, network.latent_spatial)
        }
    }
}

fn check_term(name: &str, t: &Tensor, step: u64) -> Result<f64> {
    let v = scalar(t)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} loss is {v} at step {step}")))
    }
}

/// All mutable training state.
pub struct Trainer {
    pub config: TrainConfig,
    pub nets: Networks,
    pub identity: Option<Classifier>,
    pub specs: Vec<ManipulationSpec>,
    pub delta: f64,
    pub epoch: usize,
    pub step: u64,
    pub best_cycle_error: Option<f64>,
    opt_g: Adam,
    opt_d: Adam,
    rng: ChaCha8Rng,
    train: Vec<Sample>,
    validation: Vec<Sample>,
    samplers: Vec<PairSampler>,
    device: Device,
}

impl Trainer {
    /// Opens the dataset and identity classifier named in `config`.
    pub fn new(config: TrainConfig, device: &Device) -> Result<Self> {
        config.validate()?;
        let dataset = Dataset::open(&config.dataset_path)?;
        let mut train = dataset.load(Split::Train)?;
        if let Some(n) = config.max_train_samples {
            train.truncate(n);
        }
        let mut validation = dataset.load(Split::Test)?;
        validation.truncate(config.validation_samples);
        let identity = match &config.identity_classifier {
            Some(path) => Some(Classifier::load(path, device)?),
            None => None,
        };
        Self::from_samples(config, train, validation, identity, device)
    }

    pub fn from_samples(
        config: TrainConfig,
        train: Vec<Sample>,
        validation: Vec<Sample>,
        identity: Option<Classifier>,
        device: &Device,
    ) -> Result<Self> {
        if config.weights.alpha3 > 0.0 && identity.is_none() {
            return Err(Error::Config("alpha3 > 0 needs an identity classifier".into()));
        }
        let mut checked = config.clone();
        checked.identity_classifier.get_or_insert_with(PathBuf::new);
        checked.validate()?;
        if let Some(s) = train.iter().find(|s| s.size != config.network.input_size) {
            return Err(Error::Dataset(format!(
                "sample size {} does not match network input {}",
                s.size, config.network.input_size
            )));
        }
        let samplers = config
            .attributes
            .iter()
            .map(|&a| PairSampler::new(&train, a))
            .collect::<Result<Vec<_>>>()?;
        let nets = Networks::new(&config.network, DType::F32, device, config.seed)?;

        let delta = match config.delta_calibration.mode {
            DeltaMode::Fixed => config.delta_calibration.value.unwrap_or_default(),
            DeltaMode::HalfRange => {
                let warmup = train
                    .chunks(config.batch_size)
                    .take(config.delta_calibration.warmup_batches)
                    .map(|c| image_batch(c, device))
                    .collect::<Result<Vec<_>>>()?;
                calibrate_delta(&nets.generator.encoder, &warmup)?
            }
        };
        log::info!("attribute strength delta = {delta:.4}");
        let pixel_set = pixel_set_for(&config.network, config.pixel_selection)?;
        let specs = config
            .attributes
            .iter()
            .map(|&a| ManipulationSpec::new(&config.network, a, delta, pixel_set.clone()))
            .collect::<Result<Vec<_>>>()?;

        let opt_g = Adam::new(named_vars(&nets.generator_vars), AdamConfig::with_lr(config.lr_generator))?;
        let opt_d = Adam::new(
            named_vars(&nets.discriminator_vars),
            AdamConfig::with_lr(config.lr_discriminator),
        )?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7261_696e);
        Ok(Self {
            config,
            nets,
            identity,
            specs,
            delta,
            epoch: 0,
            step: 0,
            best_cycle_error: None,
            opt_g,
            opt_d,
            rng,
            train,
            validation,
            samplers,
            device: device.clone(),
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.config.batch_size)
    }

    pub fn validation_samples(&self) -> &[Sample] {
        &self.validation
    }

    /// Draws the next batch of pairs for the attribute scheduled at this step.
    pub fn next_batch(&mut self) -> Result<PairBatch> {
        let slot = (self.step % self.samplers.len() as u64) as usize;
        let mut xs = Vec::with_capacity(self.config.batch_size);
        let mut ys = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let (x, y) = self.samplers[slot].sample(&mut self.rng);
            xs.push(&self.train[x]);
            ys.push(&self.train[y]);
        }
        PairBatch::new(slot, &xs, &ys, &self.device)
    }

    /// One generator update followed by one discriminator update.
    pub fn train_step(&mut self, batch: &PairBatch) -> Result<LossReport> {
        let w = self.config.weights;
        let spec = &self.specs[batch.attribute_slot];
        let b = batch.x.dim(0)?;
        if batch.y.dim(0)? != b {
            return Err(Error::shape(format!("{b} y images"), batch.y.dim(0)?));
        }
        let n = 2 * b;
        let images = Tensor::cat(&[&batch.x, &batch.y], 0)?;
        let order = self.config.cycle_order;
        let signs: Vec<f64> = (0..n).map(|i| order.first_sign(i < b)).collect();
        let targets: Vec<f32> = signs.iter().map(|&s| (s > 0.0) as u8 as f32).collect();
        let targets = Tensor::from_vec(targets, (n, 1), &self.device)?;
        let generator = &self.nets.generator;
        let disc = &self.nets.discriminator;

        let (mu, logvar) = generator.encoder.forward(&images)?;
        let noise = standard_normal(&mut self.rng, mu.dims(), mu.dtype(), &self.device)?;
        let z = reparameterize(&mu, &logvar, &noise)?;
        let offset = spec.offset(mu.dims(), &signs, mu.dtype(), &self.device)?;
        let decoded = generator.decode(&Tensor::cat(&[&z, &(&mu + &offset)?], 0)?)?;
        let recon = decoded.narrow(0, 0, n)?;
        let manip = decoded.narrow(0, n, n)?;

        let vae = objective::vae_loss(&images, &recon, &mu, &logvar, w.lambda1, w.lambda2)?;
        let (mu2, _) = generator.encoder.forward(&manip)?;
        let cycled = generator.decode(&(mu2 - &offset)?)?;
        let cycle = objective::cycle_loss(
            &batch.x,
            &cycled.narrow(0, 0, b)?,
            &batch.y,
            &cycled.narrow(0, b, b)?,
        )?;

        let d_fake = disc.forward(&decoded)?;
        let p_fake = sigmoid(&d_fake.adversarial)?;
        let adv_fake = if self.config.manipulated_as_fake {
            p_fake
        } else {
            p_fake.narrow(0, 0, n)?
        };
        let gan_g = objective::gan_g_loss(&adv_fake)?;
        let attr_col = spec.attribute.index();
        let attr_logits = d_fake.attributes.narrow(0, n, n)?.narrow(1, attr_col, 1)?;
        let attr_g = objective::bce_with_logits(&attr_logits, &targets)?;

        let id = match &self.identity {
            Some(f) => {
                let feats = f.features(&Tensor::cat(&[&images, &decoded], 0)?)?;
                let fx = feats.narrow(0, 0, n)?.detach();
                let on_recon = objective::id_loss(&fx, &feats.narrow(0, n, n)?)?;
                let on_manip = objective::id_loss(&fx, &feats.narrow(0, 2 * n, n)?)?;
                ((on_recon + on_manip)? * 0.5)?
            }
            None => Tensor::zeros((), DType::F32, &self.device)?,
        };
        let mask = ((objective::mask_loss(&images, &recon, &batch.masks)?
            + objective::mask_loss(&images, &manip, &batch.masks)?)?
            * 0.5)?;

        let step = self.step;
        let mut report = LossReport {
            vae: check_term("vae", &vae, step)?,
            gan_g: check_term("gan_g", &gan_g, step)?,
            id: check_term("id", &id, step)?,
            cycle: check_term("cycle", &cycle, step)?,
            mask: check_term("mask", &mask, step)?,
            attr_g: check_term("attr_g", &attr_g, step)?,
            ..Default::default()
        };
        let total_g = objective::weighted_sum(&[
            (w.alpha1, &vae),
            (w.alpha2, &gan_g),
            (w.alpha3, &id),
            (w.alpha4, &cycle),
            (w.alpha5, &mask),
            (w.alpha_attr, &attr_g),
        ])?;
        check_term("total_g", &total_g, step)?;
        self.opt_g.step(&total_g.backward()?)?;

        let fakes = if self.config.manipulated_as_fake {
            decoded.detach()
        } else {
            recon.detach()
        };
        let d_out = disc.forward(&Tensor::cat(&[&images, &fakes], 0)?)?;
        let probs = sigmoid(&d_out.adversarial)?;
        let real = probs.narrow(0, 0, n)?;
        let fake = probs.narrow(0, n, fakes.dim(0)?)?;
        let gan_d = objective::gan_d_loss(&real, &fake)?;
        let attr_d = objective::bce_with_logits(&d_out.attributes.narrow(0, 0, n)?, &batch.labels)?;
        report.gan_d = check_term("gan_d", &gan_d, step)?;
        report.attr_d = check_term("attr_d", &attr_d, step)?;
        let total_d = objective::weighted_sum(&[(w.alpha2, &gan_d), (w.alpha_attr, &attr_d)])?;
        check_term("total_d", &total_d, step)?;
        self.opt_d.step(&total_d.backward()?)?;

        let (tg, td) = objective::total_losses(&report, &w);
        report.total_g = tg;
        report.total_d = td;
        report.validate()?;
        self.step += 1;
        Ok(report)
    }

    /// Runs one epoch, handing every step record to `sink`.
    pub fn run_epoch(&mut self, mut sink: impl FnMut(&StepRecord) -> Result<()>) -> Result<()> {
        let epoch = self.epoch + 1;
        for _ in 0..self.steps_per_epoch() {
            let batch = self.next_batch()?;
            let attribute = self.specs[batch.attribute_slot].attribute;
            let losses = self.train_step(&batch)?;
            sink(&StepRecord {
                epoch,
                step: self.step,
                attribute,
                losses,
            })?;
        }
        self.epoch = epoch;
        Ok(())
    }

    /// Mean cycle error of the current generator on the validation images.
    pub fn validation_cycle_error(&self) -> Result<Option<f64>> {
        if self.validation.is_empty() {
            return Ok(None);
        }
        let x = image_batch(&self.validation, &self.device)?;
        let mut total = 0.0;
        for spec in &self.specs {
            total += crate::eval::cycle_error(&self.nets.generator, &x, spec)?;
        }
        Ok(Some(total / self.specs.len() as f64))
    }
}

fn append_log(path: &Path, record: &StepRecord) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(file, "{}", serde_json::to_string(record)?).map_err(|e| Error::io(path, e))
}

/// Reads every record of a training log.
pub fn read_log(path: &Path) -> Result<Vec<StepRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn truncate_log(path: &Path, last_step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<StepRecord> = read_log(path)?.into_iter().filter(|r| r.step <= last_step).collect();
    let mut text = String::new();
    for r in &kept {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains per `config`, resuming from the newest epoch checkpoint when
/// `resume` is set. Returns the path of the final checkpoint.
pub fn train(config: &TrainConfig, resume: bool, device: &Device) -> Result<PathBuf> {
    config.validate()?;
    let dir = &config.checkpoint_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let log_path = dir.join(LOG_FILE);

    let mut trainer = Trainer::new(config.clone(), device)?;
    let latest = if resume { latest_epoch_checkpoint(dir)? } else { None };
    match latest {
        Some(path) => {
            trainer.restore(&path)?;
            truncate_log(&log_path, trainer.step)?;
            log::info!("resumed from {} at epoch {}", path.display(), trainer.epoch);
        }
        None => {
            if log_path.exists() {
                fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
            }
        }
    }

    let mut last = None;
    while trainer.epoch < config.epochs {
        trainer.run_epoch(|r| append_log(&log_path, r))?;
        let cycle = trainer.validation_cycle_error()?;
        let improved = match (cycle, trainer.best_cycle_error) {
            (Some(c), Some(best)) => c < best,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            trainer.best_cycle_error = cycle;
        }
        let path = dir.join(format!("epoch_{}", trainer.epoch)).join(CHECKPOINT_FILE);
        trainer.save(&path)?;
        if improved {
            trainer.save(&dir.join("best").join(CHECKPOINT_FILE))?;
        }
        log::info!(
            "epoch {}/{} done, validation cycle error {:?}",
            trainer.epoch,
            config.epochs,
            cycle
        );
        last = Some(path);
    }
    match last {
        Some(p) => Ok(p),
        None => latest_epoch_checkpoint(dir)?
            .ok_or_else(|| Error::Checkpoint("no checkpoint was written".into())),
    }
}
