//! Image quality metrics: PSNR and single-scale SSIM.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images are compared on a fixed `[0, 1]` range unless stated otherwise.
pub const DEFAULT_DATA_RANGE: f64 = 1.0;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub data_range: f64,
}

pub fn mse(x: &Tensor, gt: &Tensor) -> Result<f64> {
    x.ensure_same_shape(gt, "mse")?;
    Ok(x.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// `10 log10(range² / MSE)`; identical images give `+inf`.
pub fn psnr(x: &Tensor, gt: &Tensor, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::param("psnr", format!("data_range must be positive, got {data_range}")));
    }
    let err = mse(x, gt)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / err).log10())
}

fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        *t = (-(i as f64 - c).powi(2) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian filter over the valid region.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5),
/// `C1 = (0.01 L)²`, `C2 = (0.03 L)²`, over all fully contained windows.
pub fn ssim(x: &Tensor, gt: &Tensor, data_range: f64) -> Result<f64> {
    const OP: &str = "ssim";
    x.ensure_same_shape(gt, OP)?;
    let (h, w) = x.dims2(OP)?;
    if h < WINDOW || w < WINDOW {
        return Err(Error::param(OP, format!("image {h}x{w} is smaller than the {WINDOW}x{WINDOW} window")));
    }
    if !(data_range > 0.0) {
        return Err(Error::param(OP, format!("data_range must be positive, got {data_range}")));
    }
    let taps = gaussian_taps();
    let (a, b) = (x.data(), gt.data());
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&u, &v)| f(u, v)).collect() };
    let mu_x = filter_valid(a, h, w, &taps);
    let mu_y = filter_valid(b, h, w, &taps);
    let e_xx = filter_valid(&prod(|u, _| u * u), h, w, &taps);
    let e_yy = filter_valid(&prod(|_, v| v * v), h, w, &taps);
    let e_xy = filter_valid(&prod(|u, v| u * v), h, w, &taps);
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cxy = e_xy[i] - mx * my;
        total += ((2.0 * (mx * my) + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / n as f64)
}

pub fn report(x: &Tensor, gt: &Tensor, data_range: f64) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(x, gt, data_range)?,
        ssim: ssim(x, gt, data_range)?,
        data_range,
    })
}
