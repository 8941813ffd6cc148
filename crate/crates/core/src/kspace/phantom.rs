use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLogan,
    Checker,
    GaussianBlobs,
}

impl std::str::FromStr for PhantomKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shepp_logan" => Ok(PhantomKind::SheppLogan),
            "checker" => Ok(PhantomKind::Checker),
            "gaussian_blobs" => Ok(PhantomKind::GaussianBlobs),
            other => Err(format!(
                "unknown phantom `{other}` (shepp_logan|checker|gaussian_blobs)"
            )),
        }
    }
}

/// Modified (high-contrast) Shepp-Logan table:
/// `(x0, y0, semi-axis a, semi-axis b, rotation in degrees, intensity)`.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [0.0, 0.0, 0.69, 0.92, 0.0, 1.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.2],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.2],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.1],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.1],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.1],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.1],
    [0.0, -0.605, 0.023, 0.023, 0.0, 0.1],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.1],
];

fn shepp_logan(h: usize, w: usize, seed: u64) -> Vec<f64> {
    let mut table = SHEPP_LOGAN;
    // seed 0 is the textbook phantom; other seeds jitter geometry slightly
    if seed != 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in table.iter_mut() {
            e[0] += rng.random_range(-0.03..0.03);
            e[1] += rng.random_range(-0.03..0.03);
            e[2] *= rng.random_range(0.9..1.1);
            e[3] *= rng.random_range(0.9..1.1);
            e[4] += rng.random_range(-5.0..5.0);
        }
    }
    let mut img = vec![0.0; h * w];
    for (i, row) in img.chunks_mut(w).enumerate() {
        let y = 1.0 - (2 * i + 1) as f64 / h as f64;
        for (j, v) in row.iter_mut().enumerate() {
            let x = (2 * j + 1) as f64 / w as f64 - 1.0;
            for &[x0, y0, a, b, deg, rho] in &table {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let xr = dx * c + dy * s;
                let yr = -dx * s + dy * c;
                if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                    *v += rho;
                }
            }
            *v = v.clamp(0.0, 1.0);
        }
    }
    img
}

fn checker(h: usize, w: usize) -> Vec<f64> {
    let side = (h.min(w) / 8).max(1);
    (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            if (y / side + x / side) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn gaussian_blobs(h: usize, w: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<[f64; 4]> = (0..6)
        .map(|_| {
            [
                rng.random_range(0.2..0.8) * h as f64,
                rng.random_range(0.2..0.8) * w as f64,
                rng.random_range(0.05..0.2) * h.min(w) as f64,
                rng.random_range(0.3..1.0),
            ]
        })
        .collect();
    let mut img: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            blobs
                .iter()
                .map(|&[cy, cx, s, amp]| amp * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp())
                .sum()
        })
        .collect();
    let max = img.iter().cloned().fold(0.0, f64::max);
    img.iter_mut().for_each(|v| *v /= max);
    img
}

/// Deterministic synthetic test image with values in `[0, 1]`.
pub fn make_phantom(h: usize, w: usize, kind: PhantomKind, seed: u64) -> Result<Tensor> {
    if h < 16 || w < 16 {
        return Err(Error::param("make_phantom", format!("size {h}x{w} must be at least 16x16")));
    }
    let data = match kind {
        PhantomKind::SheppLogan => shepp_logan(h, w, seed),
        PhantomKind::Checker => checker(h, w),
        PhantomKind::GaussianBlobs => gaussian_blobs(h, w, seed),
    };
    Tensor::image(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shepp_logan_in_unit_range() {
        for seed in 0..4 {
            let img = make_phantom(64, 48, PhantomKind::SheppLogan, seed).unwrap();
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(img.max_abs() > 0.9);
        }
    }

    #[test]
    fn checker_count() {
        let img = make_phantom(16, 16, PhantomKind::Checker, 0).unwrap();
        assert_eq!(img.data().iter().filter(|&&v| v == 1.0).count(), 128);
        assert_eq!(img.data()[..4], [1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn seeded_kinds_are_deterministic() {
        let a = make_phantom(32, 32, PhantomKind::GaussianBlobs, 5).unwrap();
        assert_eq!(a, make_phantom(32, 32, PhantomKind::GaussianBlobs, 5).unwrap());
        assert_ne!(a, make_phantom(32, 32, PhantomKind::GaussianBlobs, 6).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_tiny_sizes() {
        assert!(make_phantom(8, 32, PhantomKind::Checker, 0).is_err());
    }
}
