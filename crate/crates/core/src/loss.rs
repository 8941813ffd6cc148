//! Hybrid image/phase/amplitude L1 loss and its analytic gradient.
//!
//! `total = mean|out - gt| + alpha * mean|wrap(P(out) - P(gt))| + beta * mean|A(out) - A(gt)|`
//! where `A`, `P` are the amplitude and phase of the unnormalized spectrum.

use crate::error::Result;
use crate::fourier::{decompose, dft2_centered, fft2_inplace, fft2_real, wrap_phase, ComplexGrid};
use crate::tensor::Tensor;

/// Default weight of the phase and amplitude terms.
pub const DEFAULT_WEIGHT: f64 = 0.05;

/// Bins with smaller amplitude contribute no phase or amplitude gradient.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub image_l1: f64,
    pub phase_l1: f64,
    pub amp_l1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute principal-value phase difference.
pub fn phase_l1(phase_out: &[f64], phase_gt: &[f64]) -> f64 {
    let n = phase_out.len() as f64;
    phase_out
        .iter()
        .zip(phase_gt)
        .map(|(a, b)| wrap_phase(a - b).abs())
        .sum::<f64>()
        / n
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn hybrid_loss(out: &Tensor, gt: &Tensor, alpha: f64, beta: f64) -> Result<LossBreakdown> {
    const OP: &str = "hybrid_loss";
    out.ensure_same_shape(gt, OP)?;
    out.dims2(OP)?;
    let s_out = decompose(&dft2_centered(out)?);
    let s_gt = decompose(&dft2_centered(gt)?);
    let image_l1 = mean_abs_diff(out.data(), gt.data());
    let phase_l1 = phase_l1(s_out.phase.data(), s_gt.phase.data());
    let amp_l1 = mean_abs_diff(s_out.amplitude.data(), s_gt.amplitude.data());
    Ok(LossBreakdown {
        image_l1,
        phase_l1,
        amp_l1,
        alpha,
        beta,
        total: image_l1 + alpha * phase_l1 + beta * amp_l1,
    })
}

/// Gradient of [`hybrid_loss`]'s total with respect to every pixel of `out`.
///
/// L1 kinks use the `sign(0) = 0` subgradient. With `X = F out`,
/// `dA/dx_p = Re(conj(X) e_p) / A` and `dP/dx_p = Im(conj(X) e_p) / A²`
/// where `e_p` is the DFT kernel column of pixel `p`, so both spectral terms
/// reduce to one forward transform of a per-bin weight grid.
pub fn hybrid_loss_grad(out: &Tensor, gt: &Tensor, alpha: f64, beta: f64) -> Result<Tensor> {
    const OP: &str = "hybrid_loss_grad";
    out.ensure_same_shape(gt, OP)?;
    let (h, w) = out.dims2(OP)?;
    let n = (h * w) as f64;
    let x = fft2_real(out)?;
    let x_gt = fft2_real(gt)?;

    let mut amp_w = ComplexGrid::zeros(h, w);
    let mut pha_w = ComplexGrid::zeros(h, w);
    for k in 0..h * w {
        let (re, im) = (x.re[k], x.im[k]);
        let a = re.hypot(im);
        if a < AMPLITUDE_FLOOR {
            continue;
        }
        let a_gt = x_gt.re[k].hypot(x_gt.im[k]);
        let s = sign(a - a_gt);
        amp_w.re[k] = s * re / a;
        amp_w.im[k] = -s * im / a;

        let p = im.atan2(re);
        let p_gt = if a_gt == 0.0 { 0.0 } else { x_gt.im[k].atan2(x_gt.re[k]) };
        let t = sign(wrap_phase(p - p_gt));
        pha_w.re[k] = t * re / (a * a);
        pha_w.im[k] = -t * im / (a * a);
    }
    fft2_inplace(&mut amp_w, false);
    fft2_inplace(&mut pha_w, false);

    let grad = (0..h * w)
        .map(|p| {
            sign(out.data()[p] - gt.data()[p]) / n + beta * amp_w.re[p] / n + alpha * pha_w.im[p] / n
        })
        .collect();
    Tensor::image(h, w, grad)
}

/// Loss trace and final estimate of [`toy_optimize`].
#[derive(Clone, Debug)]
pub struct ToyRun {
    /// Loss before the first step and after every step (`steps + 1` entries).
    pub trace: Vec<LossBreakdown>,
    pub estimate: Tensor,
}

/// Plain gradient descent on the pixels of an estimate initialized at
/// `measured`, minimizing the hybrid loss against `gt`.
pub fn toy_optimize(
    measured: &Tensor,
    gt: &Tensor,
    steps: usize,
    lr: f64,
    alpha: f64,
    beta: f64,
) -> Result<ToyRun> {
    if steps == 0 {
        return Err(crate::Error::param("toy_optimize", "steps must be >= 1"));
    }
    let mut estimate = measured.clone();
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(hybrid_loss(&estimate, gt, alpha, beta)?);
    for _ in 0..steps {
        let g = hybrid_loss_grad(&estimate, gt, alpha, beta)?;
        for (e, d) in estimate.data_mut().iter_mut().zip(g.data()) {
            *e -= lr * d;
        }
        trace.push(hybrid_loss(&estimate, gt, alpha, beta)?);
    }
    Ok(ToyRun { trace, estimate })
}
