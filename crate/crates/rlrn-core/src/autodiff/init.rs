use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Uniform Xavier initialization: values in `±sqrt(6/(fan_in+fan_out))`.
pub fn xavier_init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Usage("xavier_init requires positive fans".into()));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let data: Vec<f32> = (0..fan_in * fan_out)
        .map(|_| rng.random::<f32>() * 2.0 * bound - bound)
        .collect();
    Tensor::new(vec![fan_in, fan_out], data)
}

/// Xavier-initialized convolution weight `[oc, ic, k, k]`; fans follow the
/// receptive field (`fan_in = ic*k*k`, `fan_out = oc*k*k`).
pub fn xavier_conv(oc: usize, ic: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if oc == 0 || ic == 0 || k == 0 {
        return Err(Error::Usage("xavier_conv requires positive dims".into()));
    }
    let fan_in = ic * k * k;
    let fan_out = oc * k * k;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let data: Vec<f32> = (0..oc * ic * k * k)
        .map(|_| rng.random::<f32>() * 2.0 * bound - bound)
        .collect();
    Tensor::new(vec![oc, ic, k, k], data)
}
