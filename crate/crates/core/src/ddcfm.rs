//! Dual-domain complementary fusion.
//!
//! Each branch carries an instance-norm scale `omega` whose smallest entries
//! mark the least informative channels. Those channels are multiplied
//! elementwise by the same channel of the other branch; every other channel
//! passes through untouched. Both enhanced branches are then concatenated and
//! fused back to `C` channels by a 1×1 convolution.

use crate::error::{Error, Result};
use crate::numerics::{conv2d, instance_norm, ConvSpec, NormParams};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GateConfig {
    /// Fraction of channels to enhance.
    pub fraction: f64,
    /// Rank channels by `|omega|` instead of `omega`.
    pub use_abs: bool,
    /// Lower bound on the number of enhanced channels.
    pub min_gated: usize,
    /// Multiply instance-normalized features instead of raw ones.
    pub normalized_features: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            use_abs: false,
            min_gated: 1,
            normalized_features: false,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::param(
                "GateConfig",
                format!("fraction must lie in (0, 1), got {}", self.fraction),
            ));
        }
        Ok(())
    }

    /// Number of gated channels out of `channels`.
    pub fn gate_count(&self, channels: usize) -> usize {
        let by_fraction = (self.fraction * channels as f64).floor() as usize;
        self.min_gated.max(by_fraction).min(channels)
    }
}

/// Gated channel set and the threshold value that realizes it.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelImportance {
    pub omega: Vec<f64>,
    /// Importance of the last gated channel; `None` when nothing is gated.
    pub threshold: Option<f64>,
    /// Gated channel indices in ascending order.
    pub gated: Vec<usize>,
}

impl ChannelImportance {
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.omega.len()];
        for &c in &self.gated {
            m[c] = true;
        }
        m
    }
}

/// Selects the `k = max(min_gated, floor(fraction * C))` channels with the
/// smallest importance; ties go to the lower channel index.
pub fn importance_threshold(omega: &[f64], cfg: &GateConfig) -> ChannelImportance {
    let key = |c: usize| if cfg.use_abs { omega[c].abs() } else { omega[c] };
    let mut ranked: Vec<usize> = (0..omega.len()).collect();
    ranked.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let k = cfg.gate_count(omega.len());
    let mut gated = ranked[..k].to_vec();
    let threshold = gated.last().map(|&c| key(c));
    gated.sort_unstable();
    ChannelImportance {
        omega: omega.to_vec(),
        threshold,
        gated,
    }
}

/// Multiplies the gated channels of `f_a` by the matching channels of `f_b`.
pub fn cross_enhance(f_a: &Tensor, f_b: &Tensor, omega_a: &[f64], cfg: &GateConfig) -> Result<Tensor> {
    const OP: &str = "cross_enhance";
    f_a.ensure_same_shape(f_b, OP)?;
    let (b, c, _, _) = f_a.dims4(OP)?;
    if omega_a.len() != c {
        return Err(Error::shape(OP, &[c], &[omega_a.len()]));
    }
    let gate = importance_threshold(omega_a, cfg).mask();
    let mut out = f_a.clone();
    for bi in 0..b {
        for (ch, _) in gate.iter().enumerate().filter(|(_, &g)| g) {
            let src = f_b.plane(bi, ch);
            for (o, s) in out.plane_mut(bi, ch).iter_mut().zip(src) {
                *o *= s;
            }
        }
    }
    Ok(out)
}

/// Learned state of one fusion instance.
#[derive(Clone, Debug, PartialEq)]
pub struct DdcfmState {
    pub norm_a: NormParams,
    pub norm_b: NormParams,
    /// 1×1 convolution from `2C` to `C` channels over `[enh_a, enh_b]`.
    pub fusion: ConvSpec,
}

impl DdcfmState {
    /// Normalization parameters at identity, fusion conv zeroed.
    pub fn zeros(channels: usize) -> Self {
        Self {
            norm_a: NormParams::identity(channels),
            norm_b: NormParams::identity(channels),
            fusion: ConvSpec::zeros(2 * channels, channels, (1, 1), 1, 0),
        }
    }

    /// Fusion conv that copies the first `C` input channels (the enhanced
    /// `a` branch) through.
    pub fn select_first(channels: usize) -> Self {
        let mut s = Self::zeros(channels);
        for c in 0..channels {
            s.fusion.weights.data_mut()[c * 2 * channels + c] = 1.0;
        }
        s
    }

    /// Same parameters with the two branches swapped, so the gate of each
    /// branch follows its features.
    pub fn mirrored(&self, fusion: ConvSpec) -> Self {
        Self {
            norm_a: self.norm_b.clone(),
            norm_b: self.norm_a.clone(),
            fusion,
        }
    }

    pub fn param_count(&self) -> usize {
        self.norm_a.param_count() + self.norm_b.param_count() + self.fusion.param_count()
    }
}

/// Both cross-enhanced branches `(enh_a, enh_b)`.
pub fn enhance_pair(f_a: &Tensor, f_b: &Tensor, state: &DdcfmState, cfg: &GateConfig) -> Result<(Tensor, Tensor)> {
    const OP: &str = "ddcfm_fuse";
    f_a.ensure_same_shape(f_b, OP)?;
    let (src_a, src_b);
    let (a, b) = if cfg.normalized_features {
        src_a = instance_norm(f_a, &state.norm_a.weight, &state.norm_a.offset, state.norm_a.eps)?;
        src_b = instance_norm(f_b, &state.norm_b.weight, &state.norm_b.offset, state.norm_b.eps)?;
        (&src_a, &src_b)
    } else {
        (f_a, f_b)
    };
    let enh_a = cross_enhance(a, b, &state.norm_a.weight, cfg)?;
    let enh_b = cross_enhance(b, a, &state.norm_b.weight, cfg)?;
    Ok((enh_a, enh_b))
}

/// Gated cross-enhancement of both branches followed by 1×1 fusion.
pub fn ddcfm_fuse(f_a: &Tensor, f_b: &Tensor, state: &DdcfmState, cfg: &GateConfig) -> Result<Tensor> {
    let (enh_a, enh_b) = enhance_pair(f_a, f_b, state, cfg)?;
    conv2d(&Tensor::concat_channels(&[&enh_a, &enh_b])?, &state.fusion)
}
