use candle_core::{DType, Module, Tensor};
use candle_nn::{
    conv2d, conv_transpose2d, linear, Conv2d, Conv2dConfig, ConvTranspose2d, ConvTranspose2dConfig, Linear, VarBuilder,
};

use super::config::{conv_stack_output, NetworkConfig};
use crate::error::{Error, Result};
use crate::synthdata::Attribute;

pub(crate) const LEAK: f64 = 0.2;

pub(crate) fn leaky(x: &Tensor) -> candle_core::Result<Tensor> {
    candle_nn::ops::leaky_relu(x, LEAK)
}

fn down(in_c: usize, out_c: usize, vb: VarBuilder) -> candle_core::Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding: 1,
        stride: 2,
        ..Default::default()
    };
    conv2d(in_c, out_c, 4, cfg, vb)
}

/// Nearest-neighbour upsampling by an integer factor via broadcasting.
pub(crate) fn check_image(x: &Tensor, size: usize) -> Result<()> {
    match x.dims() {
        &[_, 3, h, w] if h == size && w == size => Ok(()),
        dims => Err(Error::shape(format!("[batch, 3, {size}, {size}]"), format!("{dims:?}"))),
    }
}

/// Convolutional encoder producing the mean and log-variance maps.
#[derive(Clone, Debug)]
pub struct Encoder {
    convs: Vec<Conv2d>,
    latent_channels: usize,
    input_size: usize,
    dtype: DType,
}

impl Encoder {
    pub fn new(config: &NetworkConfig, vb: VarBuilder) -> Result<Self> {
        let n = config.encoder_layers.len();
        let mut in_c = 3;
        let mut convs = Vec::with_capacity(n);
        for (i, layer) in config.encoder_layers.iter().enumerate() {
            let out_c = if i + 1 == n { 2 * layer.channels } else { layer.channels };
            let cfg = Conv2dConfig {
                padding: layer.padding,
                stride: layer.stride,
                ..Default::default()
            };
            convs.push(conv2d(in_c, out_c, layer.kernel, cfg, vb.pp(format!("conv{i}")))?);
            in_c = layer.channels;
        }
        Ok(Self {
            convs,
            latent_channels: config.latent_channels,
            input_size: config.input_size,
            dtype: vb.dtype(),
        })
    }

    /// Returns `(mu, logvar)`, each `[batch, C, F, F]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        check_image(x, self.input_size)?;
        let mut h = x.to_dtype(self.dtype)?;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(&h)?;
            if i < last {
                h = leaky(&h)?;
            }
        }
        let c = self.latent_channels;
        Ok((h.narrow(1, 0, c)?, h.narrow(1, c, c)?))
    }
}

/// Transposed mirror of the encoder; sigmoid output.
#[derive(Clone, Debug)]
pub struct Decoder {
    layers: Vec<ConvTranspose2d>,
    latent: (usize, usize, usize),
    dtype: DType,
}

impl Decoder {
    pub fn new(config: &NetworkConfig, vb: VarBuilder) -> Result<Self> {
        let enc = &config.encoder_layers;
        let mut layers = Vec::with_capacity(enc.len());
        for (j, idx) in (0..enc.len()).rev().enumerate() {
            let in_c = enc[idx].channels;
            let out_c = if idx == 0 { 3 } else { enc[idx - 1].channels };
            let layer = &enc[idx];
            let cfg = ConvTranspose2dConfig {
                padding: layer.padding,
                stride: layer.stride,
                ..Default::default()
            };
            layers.push(conv_transpose2d(in_c, out_c, layer.kernel, cfg, vb.pp(format!("up{j}")))?);
        }
        Ok(Self {
            layers,
            latent: config.latent_shape(),
            dtype: vb.dtype(),
        })
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.latent;
        match z.dims() {
            &[_, zc, zh, zw] if (zc, zh, zw) == (c, h, w) => {}
            dims => return Err(Error::shape(format!("[batch, {c}, {h}, {w}]"), format!("{dims:?}"))),
        }
        let mut h = z.to_dtype(self.dtype)?;
        let last = self.layers.len() - 1;
        for (i, conv) in self.layers.iter().enumerate() {
            h = conv.forward(&h)?;
            h = if i < last { leaky(&h)? } else { candle_nn::ops::sigmoid(&h)? };
        }
        Ok(h)
    }
}

/// Logits of the real/fake head and the per-attribute auxiliary head.
#[derive(Clone, Debug)]
pub struct DiscriminatorOutput {
    pub adversarial: Tensor,
    pub attributes: Tensor,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    convs: Vec<Conv2d>,
    head: Conv2d,
    input_size: usize,
    dtype: DType,
}

impl Discriminator {
    pub fn new(config: &NetworkConfig, vb: VarBuilder) -> Result<Self> {
        let widths = &config.discriminator_channels;
        let mut convs = Vec::with_capacity(widths.len());
        let mut in_c = 3;
        for (i, &w) in widths.iter().enumerate() {
            convs.push(down(in_c, w, vb.pp(format!("conv{i}")))?);
            in_c = w;
        }
        let spatial = conv_stack_output(config.input_size, widths.len())
            .ok_or_else(|| Error::Config("discriminator stack too deep".into()))?;
        let head = conv2d(
            in_c,
            1 + Attribute::COUNT,
            spatial,
            Conv2dConfig::default(),
            vb.pp("head"),
        )?;
        Ok(Self {
            convs,
            head,
            input_size: config.input_size,
            dtype: vb.dtype(),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<DiscriminatorOutput> {
        check_image(x, self.input_size)?;
        let mut h = x.to_dtype(self.dtype)?;
        for conv in &self.convs {
            h = leaky(&conv.forward(&h)?)?;
        }
        let out = self.head.forward(&h)?.flatten_from(1)?;
        Ok(DiscriminatorOutput {
            adversarial: out.narrow(1, 0, 1)?.squeeze(1)?,
            attributes: out.narrow(1, 1, Attribute::COUNT)?,
        })
    }

    /// Probability that each image is real, in `(0, 1)`.
    pub fn discriminate(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::sigmoid(&self.forward(x)?.adversarial)?)
    }
}

/// Small conv classifier; its penultimate activations serve as features.
#[derive(Clone, Debug)]
pub struct ClassifierNet {
    convs: Vec<Conv2d>,
    feature: Linear,
    out: Linear,
    input_size: usize,
    dtype: DType,
}

impl ClassifierNet {
    pub fn new(
        input_size: usize,
        widths: &[usize],
        features: usize,
        outputs: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let mut convs = Vec::with_capacity(widths.len());
        let mut in_c = 3;
        for (i, &w) in widths.iter().enumerate() {
            convs.push(down(in_c, w, vb.pp(format!("conv{i}")))?);
            in_c = w;
        }
        let spatial = conv_stack_output(input_size, widths.len())
            .ok_or_else(|| Error::Config("classifier stack too deep".into()))?;
        Ok(Self {
            convs,
            feature: linear(in_c * spatial * spatial, features, vb.pp("feature"))?,
            out: linear(features, outputs, vb.pp("out"))?,
            input_size,
            dtype: vb.dtype(),
        })
    }

    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        check_image(x, self.input_size)?;
        let mut h = x.to_dtype(self.dtype)?;
        for conv in &self.convs {
            h = leaky(&conv.forward(&h)?)?;
        }
        Ok(leaky(&self.feature.forward(&h.flatten_from(1)?)?)?)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.out.forward(&self.features(x)?)?)
    }
}
