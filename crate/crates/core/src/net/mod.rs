//! Forward-only reconstruction network.
//!
//! A shallow convolution lifts the input image to `C` feature channels.
//! Those features go through two branches: an image branch of residue Mamba
//! groups scanned in local windows, and a frequency branch that splits each
//! channel's centered spectrum into amplitude and phase, refines both with
//! groups scanned along circular frequency orders, fuses them and transforms
//! back. A second fusion merges the branches, and a transposed-convolution
//! head maps the shallow and fused features back to one channel on top of a
//! global residual.

mod config;
mod rmg;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ddcfm::{ddcfm_fuse, enhance_pair, DdcfmState};
use crate::error::{Error, Result};
use crate::fourier::{decompose, dft2_centered, hermitian_part, idft2_centered_complex, recompose, wrap_phase, AmpPhase, RESIDUE_LIMIT};
use crate::numerics::{conv2d, conv_transpose2d, ConvSpec, NormParams};
use crate::scan::ScanOrder;
use crate::ssm::SsmParams;
use crate::tensor::Tensor;

pub use config::{AmplitudeMap, NetConfig};
pub use rmg::{branch_orders, mamba_block_forward, multi_path_scan, rmg_forward, MambaBlock, RmgBlock};

use rmg::init_conv;

/// Amplitude/phase fusion: shared gates, one fusion conv per output.
#[derive(Clone, Debug, PartialEq)]
pub struct ApFusion {
    /// `a` is the amplitude stack, `b` the phase stack; the fusion conv
    /// produces the amplitude output.
    pub state: DdcfmState,
    /// Produces the phase output from `[enh_phase, enh_amp]`.
    pub phase_fusion: ConvSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub cfg: NetConfig,
    pub shallow: ConvSpec,
    pub ife: Vec<RmgBlock>,
    pub afe: Vec<RmgBlock>,
    pub pfe: Vec<RmgBlock>,
    pub ap: ApFusion,
    /// Image/frequency fusion; `a` is the image branch.
    pub fusion: DdcfmState,
    /// Transposed conv `2C → 1` over `[F_s, F_d]`.
    pub head: ConvSpec,
    image_orders: Vec<ScanOrder>,
    freq_orders: Vec<ScanOrder>,
}

fn init_norm(channels: usize, rng: &mut impl Rng) -> NormParams {
    let mut n = NormParams::identity(channels);
    n.weight.iter_mut().for_each(|w| *w = 1.0 + rng.random_range(-0.1..=0.1));
    n
}

fn init_ddcfm(channels: usize, rng: &mut impl Rng) -> DdcfmState {
    let mut s = DdcfmState::zeros(channels);
    s.norm_a = init_norm(channels, rng);
    s.norm_b = init_norm(channels, rng);
    init_conv(&mut s.fusion, rng);
    s
}

fn init_groups(cfg: &NetConfig, paths: usize, rng: &mut impl Rng) -> Vec<RmgBlock> {
    (0..cfg.rmg_count)
        .map(|_| RmgBlock::init(cfg.channels, cfg.blocks_per_rmg, cfg.ssm_state, paths, cfg.rmg_kernel, rng))
        .collect()
}

/// Deterministically initialized network and its parameter count.
pub fn init_network(cfg: &NetConfig, seed: u64) -> Result<(NetworkState, usize)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.channels;
    let k = cfg.shallow_kernel;
    let mut shallow = ConvSpec::zeros(1, c, (k, k), 1, k / 2);
    init_conv(&mut shallow, &mut rng);
    let ife = init_groups(cfg, cfg.image_paths, &mut rng);
    let afe = init_groups(cfg, cfg.cfds_paths, &mut rng);
    let pfe = init_groups(cfg, cfg.cfds_paths, &mut rng);
    let state = init_ddcfm(c, &mut rng);
    let mut phase_fusion = ConvSpec::zeros(2 * c, c, (1, 1), 1, 0);
    init_conv(&mut phase_fusion, &mut rng);
    let fusion = init_ddcfm(c, &mut rng);
    let k = cfg.head_kernel;
    let mut head = ConvSpec::zeros_transposed(2 * c, 1, (k, k), 1, k / 2);
    // fan-in of a transposed conv is in_channels·kh·kw as well
    init_conv(&mut head, &mut rng);
    let net = NetworkState {
        image_orders: branch_orders(cfg.image_scan, cfg.height, cfg.width, cfg.image_paths, cfg.local_window)?,
        freq_orders: branch_orders(cfg.freq_scan, cfg.height, cfg.width, cfg.cfds_paths, cfg.local_window)?,
        cfg: cfg.clone(),
        shallow,
        ife,
        afe,
        pfe,
        ap: ApFusion { state, phase_fusion },
        fusion,
        head,
    };
    let count = net.param_count();
    Ok((net, count))
}

fn visit_conv(prefix: &str, conv: &mut ConvSpec, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
    let shape = conv.weights.shape().to_vec();
    f(&format!("{prefix}.weight"), &shape, conv.weights.data_mut());
    let len = conv.bias.len();
    f(&format!("{prefix}.bias"), &[len], &mut conv.bias);
}

fn visit_norm(prefix: &str, norm: &mut NormParams, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
    let c = norm.weight.len();
    f(&format!("{prefix}.weight"), &[c], &mut norm.weight);
    f(&format!("{prefix}.offset"), &[c], &mut norm.offset);
}

fn visit_ssm(prefix: &str, ssm: &mut SsmParams, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
    let (n, d) = (ssm.n, ssm.d);
    f(&format!("{prefix}.a"), &[n], &mut ssm.a);
    f(&format!("{prefix}.b_proj"), &[n, d], &mut ssm.b_proj);
    f(&format!("{prefix}.c_proj"), &[n, d], &mut ssm.c_proj);
    f(&format!("{prefix}.delta_proj"), &[d], &mut ssm.delta_proj);
    f(&format!("{prefix}.delta_bias"), &[1], std::slice::from_mut(&mut ssm.delta_bias));
    f(&format!("{prefix}.skip"), &[1], std::slice::from_mut(&mut ssm.skip));
}

fn visit_groups(prefix: &str, groups: &mut [RmgBlock], f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
    for (g, rmg) in groups.iter_mut().enumerate() {
        for (b, block) in rmg.blocks.iter_mut().enumerate() {
            let p = format!("{prefix}.{g}.block.{b}");
            visit_norm(&format!("{p}.norm"), &mut block.norm, f);
            visit_conv(&format!("{p}.in_proj"), &mut block.in_proj, f);
            for (i, ssm) in block.ssm.iter_mut().enumerate() {
                visit_ssm(&format!("{p}.ssm.{i}"), ssm, f);
            }
            visit_conv(&format!("{p}.out_proj"), &mut block.out_proj, f);
        }
        visit_conv(&format!("{prefix}.{g}.conv"), &mut rmg.conv, f);
        f(
            &format!("{prefix}.{g}.residual_scale"),
            &[1],
            std::slice::from_mut(&mut rmg.residual_scale),
        );
    }
}

impl NetworkState {
    /// Calls `f(name, shape, values)` for every learnable parameter in a
    /// fixed order.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit_conv("shallow", &mut self.shallow, f);
        visit_groups("ife", &mut self.ife, f);
        visit_groups("afe", &mut self.afe, f);
        visit_groups("pfe", &mut self.pfe, f);
        visit_norm("ap.norm_amp", &mut self.ap.state.norm_a, f);
        visit_norm("ap.norm_phase", &mut self.ap.state.norm_b, f);
        visit_conv("ap.fusion_amp", &mut self.ap.state.fusion, f);
        visit_conv("ap.fusion_phase", &mut self.ap.phase_fusion, f);
        visit_norm("if.norm_image", &mut self.fusion.norm_a, f);
        visit_norm("if.norm_freq", &mut self.fusion.norm_b, f);
        visit_conv("if.fusion", &mut self.fusion.fusion, f);
        visit_conv("head", &mut self.head, f);
    }

    /// Named copies of every parameter.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut copy = self.clone();
        let mut out = Vec::new();
        copy.visit_params_mut(&mut |name, shape, values| {
            let t = Tensor::new(shape, values.to_vec()).expect("visitor shapes match their buffers");
            out.push((name.to_string(), t));
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Zeroes every weight except residual scales and the SSM state
    /// diagonals, which leaves only the residual skeleton active.
    pub fn zero_non_residual(&mut self) {
        self.visit_params_mut(&mut |name, _, values| {
            if !(name.ends_with(".residual_scale") || name.ends_with(".a") || name.ends_with(".delta_bias")) {
                values.iter_mut().for_each(|v| *v = 0.0);
            }
        });
    }

    /// Overwrites parameters from named tensors. Every parameter must be
    /// present with a matching shape.
    pub fn load_params(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        let lookup: std::collections::HashMap<&str, &Tensor> =
            params.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut err = None;
        self.visit_params_mut(&mut |name, shape, values| {
            if err.is_some() {
                return;
            }
            match lookup.get(name) {
                Some(t) if t.shape() == shape => values.copy_from_slice(t.data()),
                Some(t) => err = Some(Error::shape("load_params", shape, t.shape())),
                None => err = Some(Error::Format {
                    format: "PASM-W",
                    msg: format!("missing parameter `{name}`"),
                }),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        for ssm in self.ife.iter().chain(&self.afe).chain(&self.pfe).flat_map(|g| &g.blocks).flat_map(|b| &b.ssm) {
            ssm.validate()?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_weights(path, &self.named_params())
    }

    /// Loads parameters saved by [`NetworkState::save`] into a network built
    /// from `cfg`.
    pub fn load(cfg: &NetConfig, path: &Path) -> Result<Self> {
        let (mut net, _) = init_network(cfg, 0)?;
        net.load_params(&crate::io::read_weights(path)?)?;
        Ok(net)
    }

    pub fn image_orders(&self) -> &[ScanOrder] {
        &self.image_orders
    }

    pub fn freq_orders(&self) -> &[ScanOrder] {
        &self.freq_orders
    }

    fn check_input(&self, x: &Tensor, channels: usize, op: &'static str) -> Result<usize> {
        let (b, c, h, w) = x.dims4(op)?;
        if c != channels || h != self.cfg.height || w != self.cfg.width {
            return Err(Error::shape(op, &[b, channels, self.cfg.height, self.cfg.width], x.shape()));
        }
        Ok(b)
    }
}

fn run_groups(x: &Tensor, groups: &[RmgBlock], orders: &[ScanOrder]) -> Result<Tensor> {
    let mut z = x.clone();
    for g in groups {
        z = rmg_forward(&z, g, orders)?;
    }
    Ok(z)
}

/// Output of the frequency branch and the largest imaginary residue seen
/// across all inverse transforms.
#[derive(Clone, Debug)]
pub struct FrequencyOutput {
    pub features: Tensor,
    pub residue: f64,
}

/// Frequency branch on `B × C × H × W` shallow features.
pub fn frequency_branch(f_s: &Tensor, net: &NetworkState) -> Result<FrequencyOutput> {
    const OP: &str = "frequency_branch";
    let b = net.check_input(f_s, net.cfg.channels, OP)?;
    let shape = f_s.shape().to_vec();
    let (h, w) = (shape[2], shape[3]);
    let planes = b * shape[1];

    let spectra: Vec<AmpPhase> = (0..planes)
        .into_par_iter()
        .map(|p| {
            let plane = &f_s.data()[p * h * w..(p + 1) * h * w];
            let img = Tensor::image(h, w, plane.to_vec())?;
            Ok(decompose(&dft2_centered(&img)?))
        })
        .collect::<Result<_>>()?;
    let amp = Tensor::new(&shape, spectra.iter().flat_map(|s| s.amplitude.data().iter().copied()).collect())?;
    let pha = Tensor::new(&shape, spectra.iter().flat_map(|s| s.phase.data().iter().copied()).collect())?;

    let amp = run_groups(&amp, &net.afe, &net.freq_orders)?;
    let pha = run_groups(&pha, &net.pfe, &net.freq_orders)?;
    let (enh_amp, enh_pha) = enhance_pair(&amp, &pha, &net.ap.state, &net.cfg.gate)?;
    let amp_out = conv2d(&Tensor::concat_channels(&[&enh_amp, &enh_pha])?, &net.ap.state.fusion)?;
    let pha_out = conv2d(&Tensor::concat_channels(&[&enh_pha, &enh_amp])?, &net.ap.phase_fusion)?;

    let map = net.cfg.amplitude_map;
    let planes_out: Vec<(Vec<f64>, f64)> = (0..planes)
        .into_par_iter()
        .map(|p| {
            let r = p * h * w..(p + 1) * h * w;
            let ap = AmpPhase {
                amplitude: Tensor::image(h, w, amp_out.data()[r.clone()].iter().map(|&v| map.apply(v)).collect())?,
                phase: Tensor::image(h, w, pha_out.data()[r].iter().map(|&v| wrap_phase(v)).collect())?,
            };
            let spatial = idft2_centered_complex(&hermitian_part(&recompose(&ap)?));
            let residue = spatial.im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok((spatial.re, residue))
        })
        .collect::<Result<_>>()?;
    let residue = planes_out.iter().fold(0.0f64, |m, (_, r)| m.max(*r));
    if residue > RESIDUE_LIMIT {
        return Err(Error::ConjugateSymmetry {
            residue,
            limit: RESIDUE_LIMIT,
        });
    }
    let features = Tensor::new(&shape, planes_out.into_iter().flat_map(|(re, _)| re).collect())?;
    Ok(FrequencyOutput { features, residue })
}

/// Full forward pass on a `B × 1 × H × W` image batch.
pub fn forward(img: &Tensor, net: &NetworkState) -> Result<Tensor> {
    net.check_input(img, 1, "forward")?;
    let f_s = conv2d(img, &net.shallow)?;
    let f_img = run_groups(&f_s, &net.ife, &net.image_orders)?;
    let f_freq = frequency_branch(&f_s, net)?.features;
    let f_d = ddcfm_fuse(&f_img, &f_freq, &net.fusion, &net.cfg.gate)?;
    let head = conv_transpose2d(&Tensor::concat_channels(&[&f_s, &f_d])?, &net.head)?;
    img.zip_map(&head, |a, b| a + b)
}
