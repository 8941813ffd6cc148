//! Centered 2D discrete Fourier transform and polar (amplitude/phase) split.
//!
//! Convention: the forward transform is unnormalized, the inverse carries the
//! `1 / (H * W)` factor. Centered spectra place the DC bin at
//! `(H / 2, W / 2)` (integer division).

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Imaginary residue above which an inverse transform is rejected.
pub const RESIDUE_LIMIT: f64 = 1e-6;

/// Dense complex grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn new(height: usize, width: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if n == 0 || re.len() != n || im.len() != n {
            return Err(Error::shape(
                "ComplexGrid::new",
                &[n, n],
                &[re.len(), im.len()],
            ));
        }
        Ok(Self {
            height,
            width,
            re,
            im,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Flat index of the DC bin in a centered grid.
    pub fn center_index(&self) -> usize {
        (self.height / 2) * self.width + self.width / 2
    }

    /// Index of the bin holding the conjugate frequency, about the centered DC.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let (h, w) = (self.height, self.width);
        let (y, x) = (idx / w, idx % w);
        let my = (2 * (h / 2) + h - y) % h;
        let mx = (2 * (w / 2) + w - x) % w;
        my * w + mx
    }

    pub fn abs_at(&self, idx: usize) -> f64 {
        self.re[idx].hypot(self.im[idx])
    }
}

/// Amplitude and phase of a spectrum, each as an `H × W` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AmpPhase {
    pub amplitude: Tensor,
    pub phase: Tensor,
}

/// Wraps an angle to the principal interval `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

enum Plan {
    Radix2 { twiddle_re: Vec<f64>, twiddle_im: Vec<f64> },
    Naive { cos: Vec<f64>, sin: Vec<f64> },
}

impl Plan {
    fn new(n: usize) -> Self {
        if n.is_power_of_two() {
            let half = n / 2;
            let (twiddle_re, twiddle_im) = (0..half)
                .map(|k| {
                    let t = -2.0 * PI * k as f64 / n as f64;
                    (t.cos(), t.sin())
                })
                .unzip();
            Plan::Radix2 {
                twiddle_re,
                twiddle_im,
            }
        } else {
            let (cos, sin) = (0..n)
                .map(|k| {
                    let t = -2.0 * PI * k as f64 / n as f64;
                    (t.cos(), t.sin())
                })
                .unzip();
            Plan::Naive { cos, sin }
        }
    }

    /// Unnormalized transform of one line; `inverse` conjugates the kernel.
    fn run(&self, re: &mut [f64], im: &mut [f64], inverse: bool, scratch: &mut Vec<f64>) {
        let n = re.len();
        let sign = if inverse { -1.0 } else { 1.0 };
        match self {
            Plan::Radix2 {
                twiddle_re,
                twiddle_im,
            } => {
                let bits = n.trailing_zeros();
                if bits > 0 {
                    for i in 0..n {
                        let j = i.reverse_bits() >> (usize::BITS - bits);
                        if j > i {
                            re.swap(i, j);
                            im.swap(i, j);
                        }
                    }
                }
                let mut len = 2;
                while len <= n {
                    let half = len / 2;
                    let step = n / len;
                    for start in (0..n).step_by(len) {
                        for k in 0..half {
                            let wr = twiddle_re[k * step];
                            let wi = sign * twiddle_im[k * step];
                            let (a, b) = (start + k, start + k + half);
                            let tr = wr * re[b] - wi * im[b];
                            let ti = wr * im[b] + wi * re[b];
                            re[b] = re[a] - tr;
                            im[b] = im[a] - ti;
                            re[a] += tr;
                            im[a] += ti;
                        }
                    }
                    len <<= 1;
                }
            }
            Plan::Naive { cos, sin } => {
                scratch.clear();
                scratch.resize(2 * n, 0.0);
                for k in 0..n {
                    let (mut sr, mut si) = (0.0, 0.0);
                    for j in 0..n {
                        let t = (j * k) % n;
                        let (c, s) = (cos[t], sign * sin[t]);
                        sr += re[j] * c - im[j] * s;
                        si += re[j] * s + im[j] * c;
                    }
                    scratch[2 * k] = sr;
                    scratch[2 * k + 1] = si;
                }
                for k in 0..n {
                    re[k] = scratch[2 * k];
                    im[k] = scratch[2 * k + 1];
                }
            }
        }
    }
}

fn transform_rows(re: &mut [f64], im: &mut [f64], w: usize, inverse: bool) {
    let plan = Plan::new(w);
    re.par_chunks_mut(w)
        .zip(im.par_chunks_mut(w))
        .for_each_init(Vec::new, |scratch, (r, i)| plan.run(r, i, inverse, scratch));
}

fn transpose(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut dst = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
    dst
}

/// In-place unnormalized 2D transform of an uncentered grid. The inverse
/// direction applies the `1 / (H * W)` scale.
pub fn fft2_inplace(grid: &mut ComplexGrid, inverse: bool) {
    let (h, w) = (grid.height, grid.width);
    transform_rows(&mut grid.re, &mut grid.im, w, inverse);
    let mut tre = transpose(&grid.re, h, w);
    let mut tim = transpose(&grid.im, h, w);
    transform_rows(&mut tre, &mut tim, h, inverse);
    grid.re = transpose(&tre, w, h);
    grid.im = transpose(&tim, w, h);
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        grid.re.iter_mut().for_each(|v| *v *= scale);
        grid.im.iter_mut().for_each(|v| *v *= scale);
    }
}

fn roll(src: &[f64], h: usize, w: usize, dy: usize, dx: usize) -> Vec<f64> {
    let mut dst = vec![0.0; h * w];
    for y in 0..h {
        let ty = (y + dy) % h;
        for x in 0..w {
            dst[ty * w + (x + dx) % w] = src[y * w + x];
        }
    }
    dst
}

/// Moves the DC bin from `(0, 0)` to `(H / 2, W / 2)`.
pub fn fftshift(grid: &ComplexGrid) -> ComplexGrid {
    let (h, w) = (grid.height, grid.width);
    ComplexGrid {
        height: h,
        width: w,
        re: roll(&grid.re, h, w, h / 2, w / 2),
        im: roll(&grid.im, h, w, h / 2, w / 2),
    }
}

/// Inverse of [`fftshift`].
pub fn ifftshift(grid: &ComplexGrid) -> ComplexGrid {
    let (h, w) = (grid.height, grid.width);
    ComplexGrid {
        height: h,
        width: w,
        re: roll(&grid.re, h, w, h - h / 2, w - w / 2),
        im: roll(&grid.im, h, w, h - h / 2, w - w / 2),
    }
}

/// Unnormalized, uncentered forward spectrum of a real 2D image.
pub fn fft2_real(img: &Tensor) -> Result<ComplexGrid> {
    let (h, w) = img.dims2("fft2_real")?;
    let mut grid = ComplexGrid {
        height: h,
        width: w,
        re: img.data().to_vec(),
        im: vec![0.0; h * w],
    };
    fft2_inplace(&mut grid, false);
    Ok(grid)
}

/// Forward 2D DFT of a real image with the DC bin moved to the center.
pub fn dft2_centered(img: &Tensor) -> Result<ComplexGrid> {
    Ok(fftshift(&fft2_real(img)?))
}

/// Inverse of [`dft2_centered`] returning both real and imaginary parts.
pub fn idft2_centered_complex(spec: &ComplexGrid) -> ComplexGrid {
    let mut grid = ifftshift(spec);
    fft2_inplace(&mut grid, true);
    grid
}

/// Inverse of [`dft2_centered`]. The imaginary part of the result must be
/// negligible (below [`RESIDUE_LIMIT`]); it is discarded.
pub fn idft2_centered(spec: &ComplexGrid) -> Result<Tensor> {
    let grid = idft2_centered_complex(spec);
    let residue = grid.im.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if residue > RESIDUE_LIMIT {
        return Err(Error::ConjugateSymmetry {
            residue,
            limit: RESIDUE_LIMIT,
        });
    }
    Tensor::image(spec.height, spec.width, grid.re)
}

/// Projection of a centered spectrum onto its conjugate-symmetric part, the
/// spectrum of the real part of its inverse transform.
pub fn hermitian_part(spec: &ComplexGrid) -> ComplexGrid {
    let mut out = spec.clone();
    for i in 0..spec.len() {
        let m = spec.mirror_index(i);
        out.re[i] = 0.5 * (spec.re[i] + spec.re[m]);
        out.im[i] = 0.5 * (spec.im[i] - spec.im[m]);
    }
    out
}

/// Polar split. Zero bins get phase 0.
pub fn decompose(spec: &ComplexGrid) -> AmpPhase {
    let (h, w) = (spec.height, spec.width);
    let mut amp = Vec::with_capacity(spec.len());
    let mut pha = Vec::with_capacity(spec.len());
    for (&re, &im) in spec.re.iter().zip(&spec.im) {
        amp.push(re.hypot(im));
        pha.push(if re == 0.0 && im == 0.0 { 0.0 } else { im.atan2(re) });
    }
    AmpPhase {
        amplitude: Tensor::image(h, w, amp).expect("grid dims are valid"),
        phase: Tensor::image(h, w, pha).expect("grid dims are valid"),
    }
}

/// Inverse of [`decompose`].
pub fn recompose(ap: &AmpPhase) -> Result<ComplexGrid> {
    const OP: &str = "recompose";
    let (h, w) = ap.amplitude.dims2(OP)?;
    ap.amplitude.ensure_same_shape(&ap.phase, OP)?;
    if let Some(v) = ap.amplitude.data().iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::Invariant(format!(
            "amplitude must be nonnegative, found {v}"
        )));
    }
    let (re, im) = ap
        .amplitude
        .data()
        .iter()
        .zip(ap.phase.data())
        .map(|(&a, &p)| {
            let (s, c) = p.sin_cos();
            (a * c, a * s)
        })
        .unzip();
    Ok(ComplexGrid {
        height: h,
        width: w,
        re,
        im,
    })
}
