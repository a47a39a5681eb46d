//! Loss terms of the composite objective and their weighted sum.
//!
//! All reductions are means. Image tensors are `[batch, 3, H, W]`, masks
//! `[batch, 1, H, W]` with 1 on the foreground.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LossWeights {
    /// KL weight inside the VAE term.
    pub lambda1: f64,
    /// Reconstruction weight inside the VAE term.
    pub lambda2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    /// Weight of the auxiliary attribute-classification term; 0 disables it.
    #[serde(default)]
    pub alpha_attr: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 1.0,
            alpha1: 1.0,
            alpha2: 0.5,
            alpha3: 0.5,
            alpha4: 1.0,
            alpha5: 2.0,
            alpha_attr: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 0.0,
            alpha4: 0.0,
            alpha5: 0.0,
            alpha_attr: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
            ("alpha5", self.alpha5),
            ("alphaAttr", self.alpha_attr),
        ];
        match all.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            Some((name, w)) => Err(Error::Config(format!(
                "loss weight {name} must be finite and non-negative, got {w}"
            ))),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            alpha1: self.alpha1 * factor,
            alpha2: self.alpha2 * factor,
            alpha3: self.alpha3 * factor,
            alpha4: self.alpha4 * factor,
            alpha5: self.alpha5 * factor,
            alpha_attr: self.alpha_attr * factor,
        }
    }
}

/// Per-term values of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub vae: f64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub id: f64,
    pub cycle: f64,
    pub mask: f64,
    #[serde(default)]
    pub attr_g: f64,
    #[serde(default)]
    pub attr_d: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    pub fn terms(&self) -> [(&'static str, f64); 10] {
        [
            ("vae", self.vae),
            ("gan_g", self.gan_g),
            ("gan_d", self.gan_d),
            ("id", self.id),
            ("cycle", self.cycle),
            ("mask", self.mask),
            ("attr_g", self.attr_g),
            ("attr_d", self.attr_d),
            ("total_g", self.total_g),
            ("total_d", self.total_d),
        ]
    }

    /// Errors with the first non-finite or negative-where-impossible term.
    pub fn validate(&self) -> Result<()> {
        if let Some((name, _)) = self.terms().into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("loss term {name}")));
        }
        for (name, v) in [("vae", self.vae), ("id", self.id), ("cycle", self.cycle), ("mask", self.mask)] {
            if v < 0.0 {
                return Err(Error::NonFinite(format!("loss term {name} is negative ({v})")));
            }
        }
        Ok(())
    }
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn finite(t: Tensor, what: &str) -> Result<Tensor> {
    if scalar(&t)?.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn same_dims(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("{:?}", a.dims()), format!("{:?}", b.dims())));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_dims(a, b)?;
    Ok((a - b)?.abs()?.mean_all()?)
}

/// KL divergence of `N(mu, exp(logvar))` from `N(0, 1)`, averaged over entries.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    same_dims(mu, logvar)?;
    let inner = ((mu.sqr()? + logvar.exp()?)? - logvar)?;
    Ok(((inner - 1.0)?.mean_all()? * 0.5)?)
}

/// `lambda1 * KL + lambda2 * L1(x, xr)`.
pub fn vae_loss(
    x: &Tensor,
    xr: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    lambda1: f64,
    lambda2: f64,
) -> Result<Tensor> {
    let kl = kl_divergence(mu, logvar)?;
    let rec = l1(x, xr)?;
    finite(((kl * lambda1)? + (rec * lambda2)?)?, "vae loss")
}

fn check_probabilities(p: &Tensor, what: &str) -> Result<()> {
    let v = p.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Config(format!("{what} probability {bad} outside [0, 1]")));
    }
    Ok(())
}

fn clamped_log(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS)?.log()?)
}

/// Returns `(gan_d, gan_g)`: `-[log D(real) + log(1 - D(fake))]` and the
/// non-saturating `-log D(fake)`, each averaged over the batch.
pub fn gan_losses(d_real: &Tensor, d_fake: &Tensor) -> Result<(Tensor, Tensor)> {
    check_probabilities(d_real, "real")?;
    check_probabilities(d_fake, "fake")?;
    let real = clamped_log(d_real)?.mean_all()?;
    let fake_d = clamped_log(&(1.0 - d_fake)?)?.mean_all()?;
    let gan_d = (real + fake_d)?.neg()?;
    Ok((gan_d, gan_g_loss(d_fake)?))
}

/// Generator-side non-saturating loss `-log D(fake)` alone.
pub fn gan_g_loss(d_fake: &Tensor) -> Result<Tensor> {
    Ok(clamped_log(d_fake)?.mean_all()?.neg()?)
}

/// Discriminator-side adversarial loss alone (fakes detached by the caller).
pub fn gan_d_loss(d_real: &Tensor, d_fake: &Tensor) -> Result<Tensor> {
    Ok(gan_losses(d_real, d_fake)?.0)
}

/// Mean squared feature difference.
pub fn id_loss(fx: &Tensor, fgx: &Tensor) -> Result<Tensor> {
    same_dims(fx, fgx)?;
    Ok((fx - fgx)?.sqr()?.mean_all()?)
}

/// `L1(x, x_cycle) + L1(y, y_cycle)`.
pub fn cycle_loss(x: &Tensor, x_cycle: &Tensor, y: &Tensor, y_cycle: &Tensor) -> Result<Tensor> {
    Ok((l1(x, x_cycle)? + l1(y, y_cycle)?)?)
}

/// Mean absolute difference over background pixels (all channels), where
/// the background is `1 - mask` of the input image and gates both images.
pub fn mask_loss(x: &Tensor, gx: &Tensor, mask: &Tensor) -> Result<Tensor> {
    same_dims(x, gx)?;
    let (b, c, h, w) = x.dims4()?;
    if mask.dims() != [b, 1, h, w] {
        return Err(Error::shape(format!("[{b}, 1, {h}, {w}] mask"), format!("{:?}", mask.dims())));
    }
    let background = (1.0 - mask.to_dtype(x.dtype())?)?;
    let count = scalar(&background.sum_all()?)? * c as f64;
    if count == 0.0 {
        log::warn!("mask loss: mask has no background pixels, returning 0");
        return Ok(Tensor::zeros((), x.dtype(), x.device())?);
    }
    let diff = (x - gx)?.abs()?.broadcast_mul(&background)?;
    Ok((diff.sum_all()? / count)?)
}

/// Mean binary cross-entropy on logits.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    same_dims(logits, targets)?;
    let t = targets.to_dtype(logits.dtype())?;
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok(((logits.relu()? - logits.mul(&t)?)? + softplus)?.mean_all()?)
}

/// `(total_g, total_d)` from the per-term values.
pub fn total_losses(report: &LossReport, w: &LossWeights) -> (f64, f64) {
    let total_g = w.alpha1 * report.vae
        + w.alpha2 * report.gan_g
        + w.alpha3 * report.id
        + w.alpha4 * report.cycle
        + w.alpha5 * report.mask
        + w.alpha_attr * report.attr_g;
    let total_d = w.alpha2 * report.gan_d + w.alpha_attr * report.attr_d;
    (total_g, total_d)
}

/// `sum(weight * term)` as a differentiable scalar.
pub fn weighted_sum(terms: &[(f64, &Tensor)]) -> Result<Tensor> {
    let (first, rest) = terms
        .split_first()
        .ok_or_else(|| Error::Config("weighted sum of no terms".into()))?;
    let mut acc = (first.1 * first.0)?;
    for (w, t) in rest {
        acc = (acc + (*t * *w)?)?;
    }
    Ok(acc)
}
