//! Encoder, decoder, discriminator, classifiers and the latent edit operator.

mod classifier;
mod config;
mod latent;
mod manipulate;
mod modules;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use classifier::{
    train_classifier, Classifier, ClassifierKind, ClassifierMeta, PretrainConfig, TrainedClassifier,
};
pub use config::{ChannelRange, ConvLayer, NetworkConfig};
pub use latent::{reparameterize, standard_normal, LatentCode};
pub use manipulate::{manipulate, ManipulationSpec};
pub use modules::{ClassifierNet, Decoder, Discriminator, DiscriminatorOutput, Encoder};

use crate::error::Result;

/// Anything that maps an image batch to an edited image batch.
pub trait ImageEditor {
    fn input_size(&self) -> usize;

    /// `edit = None` is the plain reconstruction `De(En(x))`.
    fn generate(&self, x: &Tensor, edit: Option<&ManipulationSpec>) -> Result<Tensor>;
}

/// Encoder-decoder pair acting as the generator.
#[derive(Clone, Debug)]
pub struct Generator {
    pub config: NetworkConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Generator {
    pub fn new(config: &NetworkConfig, vb: VarBuilder) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            encoder: Encoder::new(config, vb.pp("enc"))?,
            decoder: Decoder::new(config, vb.pp("dec"))?,
        })
    }

    /// Deterministic encoding: `z = mu`.
    pub fn encode(&self, x: &Tensor) -> Result<LatentCode> {
        let (mu, logvar) = self.encoder.forward(x)?;
        Ok(LatentCode {
            z: mu.clone(),
            mu,
            logvar,
        })
    }

    /// Training-time encoding with `z = mu + exp(logvar / 2) * noise`.
    pub fn encode_sampled<R: Rng>(&self, x: &Tensor, rng: &mut R) -> Result<LatentCode> {
        let (mu, logvar) = self.encoder.forward(x)?;
        let noise = standard_normal(rng, mu.dims(), mu.dtype(), mu.device())?;
        let z = reparameterize(&mu, &logvar, &noise)?;
        Ok(LatentCode { mu, logvar, z })
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.decoder.forward(z)
    }
}

impl ImageEditor for Generator {
    fn input_size(&self) -> usize {
        self.config.input_size
    }

    fn generate(&self, x: &Tensor, edit: Option<&ManipulationSpec>) -> Result<Tensor> {
        let code = self.encode(x)?;
        match edit {
            None => self.decode(&code.mu),
            Some(spec) => self.decode(&manipulate(&code.mu, spec)?),
        }
    }
}

/// Fills every variable deterministically: leaky-ReLU Kaiming-uniform weights, zero biases.
pub fn init_parameters<R: Rng>(varmap: &VarMap, rng: &mut R) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    for name in names {
        let var = &data[name];
        if name.ends_with("bias") {
            var.set(&var.zeros_like()?)?;
            continue;
        }
        let dims = var.dims().to_vec();
        let fan: usize = dims[1..].iter().product();
        let bound = (6.0 / ((1.0 + modules::LEAK * modules::LEAK) * fan as f64)).sqrt();
        let n: usize = dims.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let t = Tensor::from_vec(values, dims.as_slice(), var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
    }
    Ok(())
}

/// Named variables of a var map, sorted by name.
pub fn named_vars(varmap: &VarMap) -> Vec<(String, Var)> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut vars: Vec<(String, Var)> = data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

/// Generator and discriminator with their trainable variables.
pub struct Networks {
    pub config: NetworkConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub generator_vars: VarMap,
    pub discriminator_vars: VarMap,
}

impl Networks {
    pub fn new(config: &NetworkConfig, dtype: DType, device: &Device, seed: u64) -> Result<Self> {
        let generator_vars = VarMap::new();
        let discriminator_vars = VarMap::new();
        let generator = Generator::new(
            config,
            VarBuilder::from_varmap(&generator_vars, dtype, device),
        )?;
        let discriminator = Discriminator::new(
            config,
            VarBuilder::from_varmap(&discriminator_vars, dtype, device).pp("disc"),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_parameters(&generator_vars, &mut rng)?;
        init_parameters(&discriminator_vars, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            generator,
            discriminator,
            generator_vars,
            discriminator_vars,
        })
    }
}

/// `[batch, 3, S, S]` tensor from row-major samples.
pub fn image_batch<'a>(
    samples: impl IntoIterator<Item = &'a crate::synthdata::Sample>,
    device: &Device,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut count = 0;
    let mut size = 0;
    for s in samples {
        size = s.size;
        data.extend(s.image_chw());
        count += 1;
    }
    Ok(Tensor::from_vec(data, (count, 3, size, size), device)?)
}

/// `[batch, 1, S, S]` foreground masks as 0/1 floats.
pub fn mask_batch<'a>(
    samples: impl IntoIterator<Item = &'a crate::synthdata::Sample>,
    device: &Device,
) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut count = 0;
    let mut size = 0;
    for s in samples {
        size = s.size;
        data.extend(s.mask_f32());
        count += 1;
    }
    Ok(Tensor::from_vec(data, (count, 1, size, size), device)?)
}
