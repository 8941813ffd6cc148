use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Golden-angle increment between consecutive radial spokes, in degrees.
pub const GOLDEN_ANGLE_DEG: f64 = 111.246;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskPattern {
    Cartesian,
    Radial,
    /// Every bin sampled; acceleration 1.
    Full,
}

impl MaskPattern {
    pub fn code(self) -> u8 {
        match self {
            MaskPattern::Cartesian => 0,
            MaskPattern::Radial => 1,
            MaskPattern::Full => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MaskPattern::Cartesian),
            1 => Some(MaskPattern::Radial),
            2 => Some(MaskPattern::Full),
            _ => None,
        }
    }
}

impl std::fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskPattern::Cartesian => "cartesian",
            MaskPattern::Radial => "radial",
            MaskPattern::Full => "full",
        })
    }
}

impl std::str::FromStr for MaskPattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cartesian" => Ok(MaskPattern::Cartesian),
            "radial" => Ok(MaskPattern::Radial),
            "full" => Ok(MaskPattern::Full),
            other => Err(format!("unknown mask pattern `{other}` (cartesian|radial)")),
        }
    }
}

/// Binary k-space sampling pattern on a centered `height × width` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub height: usize,
    pub width: usize,
    pub grid: Vec<bool>,
    pub pattern: MaskPattern,
    pub acceleration: u8,
    pub center_fraction: f64,
    pub seed: u64,
}

/// Fully sampled central band for Cartesian masks: 0.16 at ×2, 0.08 at ×4.
pub fn default_center_fraction(acceleration: u8) -> f64 {
    match acceleration {
        2 => 0.16,
        4 => 0.08,
        _ => 0.32 / acceleration as f64,
    }
}

fn check_acceleration(op: &'static str, acceleration: u8) -> Result<()> {
    if acceleration != 2 && acceleration != 4 {
        return Err(Error::param(op, format!("acceleration must be 2 or 4, got {acceleration}")));
    }
    Ok(())
}

impl SamplingMask {
    pub fn sampled(&self) -> usize {
        self.grid.iter().filter(|&&m| m).count()
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.sampled() as f64 / self.grid.len() as f64
    }

    pub fn center_index(&self) -> usize {
        (self.height / 2) * self.width + self.width / 2
    }

    pub fn at(&self, y: usize, x: usize) -> bool {
        self.grid[y * self.width + x]
    }

    /// Checks the sampled-fraction window, DC coverage and, for Cartesian
    /// masks, that every row is identical.
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() != self.height * self.width {
            return Err(Error::shape("SamplingMask", &[self.height * self.width], &[self.grid.len()]));
        }
        let target = 1.0 / self.acceleration as f64;
        let f = self.sampled_fraction();
        if f < 0.9 * target || f > 1.1 * target {
            return Err(Error::Invariant(format!(
                "sampled fraction {f:.4} outside [{:.4}, {:.4}]",
                0.9 * target,
                1.1 * target
            )));
        }
        if !self.grid[self.center_index()] {
            return Err(Error::Invariant("DC bin is not sampled".into()));
        }
        if self.pattern == MaskPattern::Cartesian {
            let first = &self.grid[..self.width];
            if self.grid.chunks(self.width).any(|row| row != first) {
                return Err(Error::Invariant("Cartesian mask rows differ".into()));
            }
        }
        Ok(())
    }
}

pub fn make_full_mask(h: usize, w: usize) -> SamplingMask {
    SamplingMask {
        height: h,
        width: w,
        grid: vec![true; h * w],
        pattern: MaskPattern::Full,
        acceleration: 1,
        center_fraction: 1.0,
        seed: 0,
    }
}

/// Column-wise (phase-encode) undersampling with the default center band.
pub fn make_cartesian_mask(h: usize, w: usize, acceleration: u8, seed: u64) -> Result<SamplingMask> {
    check_acceleration("make_cartesian_mask", acceleration)?;
    make_cartesian_mask_with(h, w, acceleration, seed, default_center_fraction(acceleration))
}

/// Fully samples the central `ceil(cf * w)` columns, then adds uniformly
/// drawn columns until `round(w / acceleration)` are sampled.
pub fn make_cartesian_mask_with(
    h: usize,
    w: usize,
    acceleration: u8,
    seed: u64,
    center_fraction: f64,
) -> Result<SamplingMask> {
    const OP: &str = "make_cartesian_mask";
    check_acceleration(OP, acceleration)?;
    if w < 8 || h == 0 {
        return Err(Error::param(OP, format!("width must be >= 8, got {h}x{w}")));
    }
    if !(center_fraction > 0.0 && center_fraction <= 1.0) {
        return Err(Error::param(OP, format!("center fraction must lie in (0, 1], got {center_fraction}")));
    }
    let n_center = ((center_fraction * w as f64) - 1e-9).ceil().max(1.0) as usize;
    let total = (w as f64 / acceleration as f64).round() as usize;
    if total < n_center {
        return Err(Error::param(
            OP,
            format!("×{acceleration} allows {total} columns but the center band needs {n_center}"),
        ));
    }
    let realized = total as f64 * acceleration as f64 / w as f64;
    if !(0.9..=1.1).contains(&realized) {
        return Err(Error::param(
            OP,
            format!("width {w} cannot realize ×{acceleration} within 10% ({total} columns)"),
        ));
    }
    let start = w / 2 - n_center / 2;
    let mut columns = vec![false; w];
    columns[start..start + n_center].iter_mut().for_each(|c| *c = true);
    let pool: Vec<usize> = (0..w).filter(|&c| !columns[c]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, pool.len(), total - n_center) {
        columns[pool[i]] = true;
    }
    let grid = (0..h).flat_map(|_| columns.iter().copied()).collect();
    Ok(SamplingMask {
        height: h,
        width: w,
        grid,
        pattern: MaskPattern::Cartesian,
        acceleration,
        center_fraction,
        seed,
    })
}

/// Bresenham cells from `(y0, x0)` towards `(y1, x1)`, stopping at the grid
/// border. The start cell is included.
fn ray(h: usize, w: usize, y0: isize, x0: isize, y1: isize, x1: isize) -> Vec<usize> {
    let (dy, dx) = ((y1 - y0).abs(), (x1 - x0).abs());
    let (sy, sx) = ((y1 - y0).signum(), (x1 - x0).signum());
    let (mut y, mut x) = (y0, x0);
    let mut err = dx - dy;
    let mut cells = Vec::new();
    loop {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            break;
        }
        cells.push(y as usize * w + x as usize);
        if (y, x) == (y1, x1) {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dy {
            err -= dy;
            x += sx;
        }
        if e2 < dx {
            err += dx;
            y += sy;
        }
    }
    cells
}

/// Golden-angle diametral spokes through the DC bin.
///
/// Spokes are rasterized as two Bresenham rays from the center and added
/// from the center outwards until `ceil(h * w / acceleration)` bins are
/// sampled, so the final spoke may stop short of the border. The seed sets
/// the angle of the first spoke.
pub fn make_radial_mask(h: usize, w: usize, acceleration: u8, seed: u64) -> Result<SamplingMask> {
    const OP: &str = "make_radial_mask";
    check_acceleration(OP, acceleration)?;
    if h.min(w) < 8 {
        return Err(Error::param(OP, format!("grid {h}x{w} must be at least 8x8")));
    }
    let target = (h * w).div_ceil(acceleration as usize);
    let mut grid = vec![false; h * w];
    let (cy, cx) = ((h / 2) as isize, (w / 2) as isize);
    grid[cy as usize * w + cx as usize] = true;
    let mut count = 1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0: f64 = rng.random_range(0.0..PI);
    let reach = (h as f64).hypot(w as f64);
    let mut spoke = 0usize;
    while count < target {
        if spoke > 64 * (h + w) {
            return Err(Error::Invariant(format!("radial spokes failed to reach {target} samples")));
        }
        let theta = theta0 + spoke as f64 * GOLDEN_ANGLE_DEG.to_radians();
        let (dy, dx) = ((reach * theta.sin()).round() as isize, (reach * theta.cos()).round() as isize);
        let fwd = ray(h, w, cy, cx, cy + dy, cx + dx);
        let back = ray(h, w, cy, cx, cy - dy, cx - dx);
        let steps = fwd.len().max(back.len());
        'spoke: for s in 0..steps {
            for arm in [&fwd, &back] {
                if let Some(&idx) = arm.get(s) {
                    if !grid[idx] {
                        grid[idx] = true;
                        count += 1;
                        if count >= target {
                            break 'spoke;
                        }
                    }
                }
            }
        }
        spoke += 1;
    }
    Ok(SamplingMask {
        height: h,
        width: w,
        grid,
        pattern: MaskPattern::Radial,
        acceleration,
        center_fraction: 0.0,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns(m: &SamplingMask) -> Vec<usize> {
        (0..m.width).filter(|&x| m.at(0, x)).collect()
    }

    #[test]
    fn cartesian_counts() {
        for seed in 0..20 {
            let m = make_cartesian_mask(16, 16, 2, seed).unwrap();
            let cols = columns(&m);
            assert_eq!(cols.len(), 8);
            assert!(cols.contains(&7) && cols.contains(&8) && cols.contains(&9));
            m.validate().unwrap();
        }
        let m = make_cartesian_mask(320, 320, 4, 1).unwrap();
        assert_eq!(m.sampled_fraction(), 0.25);
        assert_eq!(columns(&m).len(), 80);
    }

    #[test]
    fn cartesian_rejects_impossible_band() {
        assert!(make_cartesian_mask_with(16, 16, 4, 0, 0.5).is_err());
        assert!(make_cartesian_mask(16, 4, 2, 0).is_err());
        assert!(make_cartesian_mask(16, 16, 3, 0).is_err());
    }

    #[test]
    fn full_mask_is_all_ones() {
        let m = make_full_mask(5, 7);
        assert!(m.grid.iter().all(|&v| v));
        m.validate().unwrap();
    }

    #[test]
    fn radial_fraction_and_center() {
        let m = make_radial_mask(256, 256, 4, 3).unwrap();
        let f = m.sampled_fraction();
        assert!((0.25..=0.275).contains(&f), "{f}");
        assert!(m.grid[m.center_index()]);
        m.validate().unwrap();
    }

    #[test]
    fn radial_is_deterministic_and_seeded() {
        let a = make_radial_mask(32, 48, 2, 11).unwrap();
        assert_eq!(a, make_radial_mask(32, 48, 2, 11).unwrap());
        assert_ne!(a.grid, make_radial_mask(32, 48, 2, 12).unwrap().grid);
    }

    #[test]
    fn spokes_pass_through_center() {
        for theta in [0.0f64, 0.3, 1.1, 2.0] {
            let (dy, dx) = ((40.0 * theta.sin()).round() as isize, (40.0 * theta.cos()).round() as isize);
            let cells = ray(16, 16, 8, 8, 8 + dy, 8 + dx);
            assert_eq!(cells[0], 8 * 16 + 8);
            assert!(cells.len() >= 8);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]

            #[test]
            fn generated_masks_satisfy_invariants(h in 8usize..80, w in 8usize..80, accel in prop::sample::select(vec![2u8, 4]), seed in any::<u64>(), radial in any::<bool>()) {
                let m = if radial {
                    make_radial_mask(h, w, accel, seed).unwrap()
                } else {
                    match make_cartesian_mask(h, w, accel, seed) {
                        Ok(m) => m,
                        Err(_) => return Ok(()),
                    }
                };
                prop_assert!(m.validate().is_ok(), "{:?}", m.validate());
            }
        }
    }
}
