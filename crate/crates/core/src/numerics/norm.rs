use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel affine parameters of an instance normalization. The scale
/// doubles as the channel-importance weight used by the fusion gate.
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub weight: Vec<f64>,
    pub offset: Vec<f64>,
    pub eps: f64,
}

impl NormParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            weight: vec![1.0; channels],
            offset: vec![0.0; channels],
            eps: 1e-5,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.offset.len()
    }
}

/// Normalizes each `(batch, channel)` plane to zero mean and unit population
/// variance, then applies the per-channel scale and offset.
pub fn instance_norm(x: &Tensor, weight: &[f64], offset: &[f64], eps: f64) -> Result<Tensor> {
    const OP: &str = "instance_norm";
    let (_, c, h, w) = x.dims4(OP)?;
    if weight.len() != c || offset.len() != c {
        return Err(Error::shape(OP, &[c, c], &[weight.len(), offset.len()]));
    }
    if !(eps > 0.0) {
        return Err(Error::param(OP, format!("eps must be positive, got {eps}")));
    }
    let hw = (h * w) as f64;
    let mut out = x.clone();
    out.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane, v)| {
            let ch = plane % c;
            let mean = v.iter().sum::<f64>() / hw;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / hw;
            let scale = weight[ch] / (var + eps).sqrt();
            for x in v.iter_mut() {
                *x = (*x - mean) * scale + offset[ch];
            }
        });
    Ok(out)
}
