use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{conv2d, instance_norm, ConvSpec, NormParams};
use crate::scan::{cfds_order_extended, deserialize, local_order_variant, raster_order, serialize, ScanKind, ScanOrder};
use crate::ssm::{selective_ssm, SsmParams};
use crate::tensor::Tensor;

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero bias.
pub(crate) fn init_conv(spec: &mut ConvSpec, rng: &mut impl Rng) {
    let fan_in = (spec.in_channels * spec.kernel.0 * spec.kernel.1) as f64;
    let bound = 1.0 / fan_in.sqrt();
    spec.weights
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-bound..=bound));
}

/// Scan orders for one branch, one per direction.
pub fn branch_orders(kind: ScanKind, h: usize, w: usize, paths: usize, window: usize) -> Result<Vec<ScanOrder>> {
    (0..paths)
        .map(|p| match kind {
            ScanKind::Cfds => cfds_order_extended(h, w, p),
            ScanKind::Raster => raster_order(h, w, p),
            ScanKind::Local => local_order_variant(h, w, window, p),
        })
        .collect()
}

/// One Mamba block: instance norm, 1×1 input projection, one selective scan
/// per order (outputs averaged), 1×1 output projection, residual.
///
/// The scan is cubic in its input scale (`B_t` and `C_t` are projections of
/// `x_t`), so the norm keeps stacked blocks bounded on spectral amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct MambaBlock {
    pub norm: NormParams,
    pub in_proj: ConvSpec,
    pub ssm: Vec<SsmParams>,
    pub out_proj: ConvSpec,
}

impl MambaBlock {
    pub fn init(channels: usize, state: usize, paths: usize, rng: &mut impl Rng) -> Self {
        let mut in_proj = ConvSpec::zeros(channels, channels, (1, 1), 1, 0);
        let mut out_proj = ConvSpec::zeros(channels, channels, (1, 1), 1, 0);
        init_conv(&mut in_proj, rng);
        let ssm = (0..paths).map(|_| SsmParams::init(state, channels, rng)).collect();
        init_conv(&mut out_proj, rng);
        Self {
            norm: NormParams::identity(channels),
            in_proj,
            ssm,
            out_proj,
        }
    }

    pub fn param_count(&self) -> usize {
        self.norm.param_count()
            + self.in_proj.param_count()
            + self.ssm.iter().map(SsmParams::param_count).sum::<usize>()
            + self.out_proj.param_count()
    }
}

/// Mean over paths of serialize → selective scan → deserialize.
pub fn multi_path_scan(x: &Tensor, ssm: &[SsmParams], orders: &[ScanOrder]) -> Result<Tensor> {
    if orders.is_empty() || orders.len() != ssm.len() {
        return Err(Error::param(
            "multi_path_scan",
            format!("{} scan orders for {} parameter sets", orders.len(), ssm.len()),
        ));
    }
    let mut acc = Tensor::zeros(x.shape());
    for (order, ssm) in orders.iter().zip(ssm) {
        let y = deserialize(&selective_ssm(&serialize(x, order)?, ssm)?, order)?;
        for (a, v) in acc.data_mut().iter_mut().zip(y.data()) {
            *a += v;
        }
    }
    let inv = 1.0 / orders.len() as f64;
    acc.data_mut().iter_mut().for_each(|v| *v *= inv);
    Ok(acc)
}

pub fn mamba_block_forward(x: &Tensor, block: &MambaBlock, orders: &[ScanOrder]) -> Result<Tensor> {
    let n = instance_norm(x, &block.norm.weight, &block.norm.offset, block.norm.eps)?;
    let u = conv2d(&n, &block.in_proj)?;
    let y = multi_path_scan(&u, &block.ssm, orders)?;
    let z = conv2d(&y, &block.out_proj)?;
    x.zip_map(&z, |a, b| a + b)
}

/// Residue Mamba group: stacked Mamba blocks, a trailing convolution and a
/// scaled residual from the group input.
#[derive(Clone, Debug, PartialEq)]
pub struct RmgBlock {
    pub blocks: Vec<MambaBlock>,
    pub conv: ConvSpec,
    pub residual_scale: f64,
}

impl RmgBlock {
    pub fn init(channels: usize, blocks: usize, state: usize, paths: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let blocks = (0..blocks).map(|_| MambaBlock::init(channels, state, paths, rng)).collect();
        let mut conv = ConvSpec::zeros(channels, channels, (kernel, kernel), 1, kernel / 2);
        init_conv(&mut conv, rng);
        Self {
            blocks,
            conv,
            residual_scale: 1.0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(MambaBlock::param_count).sum::<usize>() + self.conv.param_count() + 1
    }
}

/// `residual_scale * x + conv(blocks(x))`, preserving the input shape.
pub fn rmg_forward(x: &Tensor, rmg: &RmgBlock, orders: &[ScanOrder]) -> Result<Tensor> {
    let mut z = x.clone();
    for block in &rmg.blocks {
        z = mamba_block_forward(&z, block, orders)?;
    }
    let z = conv2d(&z, &rmg.conv)?;
    x.zip_map(&z, |a, b| rmg.residual_scale * a + b)
}
