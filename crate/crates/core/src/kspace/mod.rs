//! Undersampling forward model: masks, phantoms, zero-filled
//! reconstruction and the amplitude/phase exchange experiment.

mod mask;
mod phantom;

pub use mask::{
    default_center_fraction, make_cartesian_mask, make_cartesian_mask_with, make_full_mask,
    make_radial_mask, MaskPattern, SamplingMask, GOLDEN_ANGLE_DEG,
};
pub use phantom::{make_phantom, PhantomKind};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fourier::{
    decompose, dft2_centered, hermitian_part, idft2_centered, idft2_centered_complex, recompose, AmpPhase,
    ComplexGrid,
};
use crate::tensor::Tensor;

/// Additive complex Gaussian k-space noise. Real and imaginary parts are
/// drawn independently with standard deviation `sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { sigma: 0.0, seed: 0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::param("NoiseSpec", format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Zero-filled reconstruction of `img` seen through `mask`.
///
/// The masked (and optionally noisy) spectrum is projected onto its
/// conjugate-symmetric part before the inverse transform, i.e. the real part
/// of the complex zero-filled image is returned.
pub fn undersample(img: &Tensor, mask: &SamplingMask, noise: &NoiseSpec) -> Result<Tensor> {
    idft2_centered(&hermitian_part(&masked_spectrum(img, mask, noise)?))
}

/// Magnitude of the complex zero-filled image, the form in which
/// single-coil MR images are displayed. Unlike [`undersample`] this is not
/// linear in `img`.
pub fn zero_filled_magnitude(img: &Tensor, mask: &SamplingMask, noise: &NoiseSpec) -> Result<Tensor> {
    let spatial = idft2_centered_complex(&masked_spectrum(img, mask, noise)?);
    let mag = spatial.re.iter().zip(&spatial.im).map(|(r, i)| r.hypot(*i)).collect();
    Tensor::image(mask.height, mask.width, mag)
}

/// `mask ⊙ (F img + noise)` on the centered grid.
fn masked_spectrum(img: &Tensor, mask: &SamplingMask, noise: &NoiseSpec) -> Result<ComplexGrid> {
    const OP: &str = "undersample";
    let (h, w) = img.dims2(OP)?;
    if (h, w) != (mask.height, mask.width) {
        return Err(Error::shape(OP, &[mask.height, mask.width], &[h, w]));
    }
    noise.validate()?;
    let mut spec = dft2_centered(img)?;
    if noise.sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let normal = Normal::new(0.0, noise.sigma).expect("sigma validated");
        for i in 0..spec.len() {
            spec.re[i] += normal.sample(&mut rng);
            spec.im[i] += normal.sample(&mut rng);
        }
    }
    for (i, &m) in mask.grid.iter().enumerate() {
        if !m {
            spec.re[i] = 0.0;
            spec.im[i] = 0.0;
        }
    }
    Ok(spec)
}

/// Image with the spectral amplitude of `amp_source` and the spectral phase
/// of `phase_source` (real part), before clamping.
pub fn swap_spectrum_unclamped(amp_source: &Tensor, phase_source: &Tensor) -> Result<Tensor> {
    const OP: &str = "swap_spectrum";
    amp_source.ensure_same_shape(phase_source, OP)?;
    amp_source.dims2(OP)?;
    let amplitude = decompose(&dft2_centered(amp_source)?).amplitude;
    let phase = decompose(&dft2_centered(phase_source)?).phase;
    // bins that vanish in one source carry rounding-noise phases that are not
    // antisymmetric, so the product needs the projection to stay real
    idft2_centered(&hermitian_part(&recompose(&AmpPhase { amplitude, phase })?))
}

/// [`swap_spectrum_unclamped`] clamped to `[0, 1]`.
pub fn swap_spectrum(amp_source: &Tensor, phase_source: &Tensor) -> Result<Tensor> {
    Ok(swap_spectrum_unclamped(amp_source, phase_source)?.map(|v| v.clamp(0.0, 1.0)))
}
