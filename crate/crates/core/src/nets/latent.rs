use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Encoder output: posterior mean, log-variance and the code passed on.
#[derive(Clone, Debug)]
pub struct LatentCode {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
}

/// `mu + exp(logvar / 2) * noise`, elementwise.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Result<Tensor> {
    if mu.dims() != logvar.dims() || mu.dims() != noise.dims() {
        return Err(Error::shape(
            format!("{:?} for mu, logvar and noise", mu.dims()),
            format!("{:?} / {:?}", logvar.dims(), noise.dims()),
        ));
    }
    let noise = noise.to_dtype(mu.dtype())?;
    Ok((mu + (logvar * 0.5)?.exp()?.mul(&noise)?)?)
}

/// Standard-normal tensor drawn from `rng` (candle's own sampler is not seedable on CPU).
pub fn standard_normal<R: Rng>(
    rng: &mut R,
    dims: &[usize],
    dtype: DType,
    device: &Device,
) -> Result<Tensor> {
    let n: usize = dims.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(values, dims, device)?.to_dtype(dtype)?)
}
