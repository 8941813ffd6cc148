//! Serialization orders that flatten `H × W` grids into sequences.
//!
//! * [`cfds_order`]: concentric Chebyshev shells around the centered DC bin,
//!   low to high frequency, each shell walked from a corner in a fixed
//!   rotational direction.
//! * [`local_order`]: window-partitioned raster scan that keeps spatial
//!   neighbours adjacent.
//! * [`raster_order`]: the plain four-direction row/column baseline.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanKind {
    Cfds,
    Local,
    Raster,
}

impl ScanKind {
    pub fn code(self) -> u8 {
        match self {
            ScanKind::Cfds => 0,
            ScanKind::Local => 1,
            ScanKind::Raster => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ScanKind::Cfds),
            1 => Some(ScanKind::Local),
            2 => Some(ScanKind::Raster),
            _ => None,
        }
    }
}

impl std::str::FromStr for ScanKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cfds" => Ok(ScanKind::Cfds),
            "local" => Ok(ScanKind::Local),
            "raster" => Ok(ScanKind::Raster),
            other => Err(format!("unknown scan kind `{other}` (cfds|local|raster)")),
        }
    }
}

/// An explicit permutation of the `h * w` flat grid indices.
///
/// `perm[t]` is the flat grid index visited at sequence position `t`. For
/// CFDS and raster orders `path_id` names the direction; for local orders it
/// holds the window size and `variant` the direction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanOrder {
    pub h: usize,
    pub w: usize,
    pub perm: Vec<usize>,
    pub kind: ScanKind,
    pub path_id: usize,
    pub variant: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rotation {
    Clockwise,
    CounterClockwise,
}

/// The four selected paths first, then their mirrored counterparts.
const CFDS_PATHS: [(Corner, Rotation); 8] = [
    (Corner::TopLeft, Rotation::Clockwise),
    (Corner::TopRight, Rotation::CounterClockwise),
    (Corner::BottomLeft, Rotation::CounterClockwise),
    (Corner::BottomRight, Rotation::Clockwise),
    (Corner::TopLeft, Rotation::CounterClockwise),
    (Corner::TopRight, Rotation::Clockwise),
    (Corner::BottomLeft, Rotation::Clockwise),
    (Corner::BottomRight, Rotation::CounterClockwise),
];

/// Chebyshev distance of `(y, x)` from the centered DC bin.
pub fn ring_radius(h: usize, w: usize, idx: usize) -> usize {
    let (y, x) = ((idx / w) as isize, (idx % w) as isize);
    let (cy, cx) = ((h / 2) as isize, (w / 2) as isize);
    (y - cy).unsigned_abs().max((x - cx).unsigned_abs())
}

/// Ring cells of radius `r` in clockwise order from the ring's top-left
/// corner, with out-of-grid cells dropped.
fn ring_cells(h: usize, w: usize, r: usize) -> Vec<(usize, usize)> {
    let (cy, cx) = ((h / 2) as isize, (w / 2) as isize);
    if r == 0 {
        return vec![(cy as usize, cx as usize)];
    }
    let r = r as isize;
    let (top, bottom, left, right) = (cy - r, cy + r, cx - r, cx + r);
    let mut cells = Vec::with_capacity(8 * r as usize);
    cells.extend((left..=right).map(|x| (top, x)));
    cells.extend((top + 1..=bottom).map(|y| (y, right)));
    cells.extend((left..right).rev().map(|x| (bottom, x)));
    cells.extend((top + 1..bottom).rev().map(|y| (y, left)));
    cells
        .into_iter()
        .filter(|&(y, x)| y >= 0 && x >= 0 && y < h as isize && x < w as isize)
        .map(|(y, x)| (y as usize, x as usize))
        .collect()
}

fn build_cfds(h: usize, w: usize, path_id: usize) -> ScanOrder {
    let (corner, rotation) = CFDS_PATHS[path_id];
    let (ty, tx) = match corner {
        Corner::TopLeft => (0, 0),
        Corner::TopRight => (0, w - 1),
        Corner::BottomLeft => (h - 1, 0),
        Corner::BottomRight => (h - 1, w - 1),
    };
    let max_r = (h / 2).max(h - 1 - h / 2).max(w / 2).max(w - 1 - w / 2);
    let mut perm = Vec::with_capacity(h * w);
    for r in 0..=max_r {
        let cells = ring_cells(h, w, r);
        let n = cells.len();
        // Nearest to the corner; ties go to the smaller row, then column.
        let start = (0..n)
            .min_by_key(|&i| {
                let (y, x) = cells[i];
                let d = y.abs_diff(ty).pow(2) + x.abs_diff(tx).pow(2);
                (d, y, x)
            })
            .expect("every ring up to max_r has an in-grid cell");
        for step in 0..n {
            let i = match rotation {
                Rotation::Clockwise => (start + step) % n,
                Rotation::CounterClockwise => (start + n - step) % n,
            };
            let (y, x) = cells[i];
            perm.push(y * w + x);
        }
    }
    ScanOrder {
        h,
        w,
        perm,
        kind: ScanKind::Cfds,
        path_id,
        variant: 0,
    }
}

/// Circular frequency-domain scan, paths 0..=3: top-left clockwise,
/// top-right counterclockwise, bottom-left counterclockwise, bottom-right
/// clockwise.
pub fn cfds_order(h: usize, w: usize, path_id: usize) -> Result<ScanOrder> {
    if path_id > 3 {
        return Err(Error::param(
            "cfds_order",
            format!("path_id {path_id} out of range 0..=3"),
        ));
    }
    cfds_order_extended(h, w, path_id)
}

/// Like [`cfds_order`] but also accepts the four mirrored paths 4..=7
/// (same corners, opposite rotation).
pub fn cfds_order_extended(h: usize, w: usize, path_id: usize) -> Result<ScanOrder> {
    if h < 2 || w < 2 {
        return Err(Error::param(
            "cfds_order",
            format!("grid {h}x{w} must be at least 2x2"),
        ));
    }
    if path_id > 7 {
        return Err(Error::param(
            "cfds_order",
            format!("path_id {path_id} out of range 0..=7"),
        ));
    }
    Ok(build_cfds(h, w, path_id))
}

/// Window-partitioned scan: windows in raster order, cells within each
/// window in raster order.
pub fn local_order(h: usize, w: usize, window: usize) -> Result<ScanOrder> {
    local_order_variant(h, w, window, 0)
}

/// Directional variants of [`local_order`]: 0 raster, 1 reversed raster,
/// 2 column-major (windows and cells), 3 reversed column-major.
pub fn local_order_variant(h: usize, w: usize, window: usize, variant: usize) -> Result<ScanOrder> {
    const OP: &str = "local_order";
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(Error::param(
            OP,
            format!("window {window} must divide both {h} and {w}"),
        ));
    }
    if variant > 3 {
        return Err(Error::param(OP, format!("variant {variant} out of range 0..=3")));
    }
    let (wy, wx) = (h / window, w / window);
    let mut perm = Vec::with_capacity(h * w);
    let column_major = variant >= 2;
    for outer in 0..wy * wx {
        let (by, bx) = if column_major {
            (outer % wy, outer / wy)
        } else {
            (outer / wx, outer % wx)
        };
        for inner in 0..window * window {
            let (dy, dx) = if column_major {
                (inner % window, inner / window)
            } else {
                (inner / window, inner % window)
            };
            perm.push((by * window + dy) * w + bx * window + dx);
        }
    }
    if variant % 2 == 1 {
        perm.reverse();
    }
    Ok(ScanOrder {
        h,
        w,
        perm,
        kind: ScanKind::Local,
        path_id: window,
        variant,
    })
}

/// Four-direction raster baseline: 0 row-major from the top-left, 1 its
/// reversal (from the bottom-right), 2 column-major from the bottom-left
/// (columns left to right, each bottom to top), 3 its reversal (from the
/// top-right).
pub fn raster_order(h: usize, w: usize, path_id: usize) -> Result<ScanOrder> {
    if path_id > 3 {
        return Err(Error::param(
            "raster_order",
            format!("path_id {path_id} out of range 0..=3"),
        ));
    }
    let mut perm: Vec<usize> = if path_id < 2 {
        (0..h * w).collect()
    } else {
        (0..w)
            .flat_map(|x| (0..h).rev().map(move |y| y * w + x))
            .collect()
    };
    if path_id % 2 == 1 {
        perm.reverse();
    }
    Ok(ScanOrder {
        h,
        w,
        perm,
        kind: ScanKind::Raster,
        path_id,
        variant: 0,
    })
}

impl ScanOrder {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Checks that `perm` visits every grid index exactly once.
    pub fn is_bijection(&self) -> bool {
        let n = self.h * self.w;
        if self.perm.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &i in &self.perm {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        true
    }

    /// Inverse permutation: `inverse()[perm[t]] == t`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (t, &i) in self.perm.iter().enumerate() {
            inv[i] = t;
        }
        inv
    }

    /// Rebuilds an order from a raw permutation (e.g. read from disk),
    /// checking bijectivity.
    pub fn from_parts(
        h: usize,
        w: usize,
        perm: Vec<usize>,
        kind: ScanKind,
        path_id: usize,
        variant: usize,
    ) -> Result<Self> {
        let order = Self {
            h,
            w,
            perm,
            kind,
            path_id,
            variant,
        };
        if !order.is_bijection() {
            return Err(Error::Invariant(format!(
                "scan order over {h}x{w} is not a permutation"
            )));
        }
        Ok(order)
    }
}

/// Flattens `B × C × H × W` into `B × C × L` along `order`.
pub fn serialize(x: &Tensor, order: &ScanOrder) -> Result<Tensor> {
    const OP: &str = "serialize";
    let (b, c, h, w) = x.dims4(OP)?;
    if h * w != order.len() {
        return Err(Error::shape(OP, &[order.h, order.w], &[h, w]));
    }
    let mut out = Vec::with_capacity(x.len());
    for plane in x.data().chunks(h * w) {
        out.extend(order.perm.iter().map(|&i| plane[i]));
    }
    Tensor::new(&[b, c, h * w], out)
}

/// Inverse of [`serialize`].
pub fn deserialize(seq: &Tensor, order: &ScanOrder) -> Result<Tensor> {
    const OP: &str = "deserialize";
    let (b, c, l) = match *seq.shape() {
        [b, c, l] => (b, c, l),
        _ => return Err(Error::shape(OP, &[0, 0, order.len()], seq.shape())),
    };
    if l != order.len() {
        return Err(Error::shape(OP, &[b, c, order.len()], seq.shape()));
    }
    let mut out = vec![0.0; seq.len()];
    for (src, dst) in seq.data().chunks(l).zip(out.chunks_mut(l)) {
        for (t, &i) in order.perm.iter().enumerate() {
            dst[i] = src[t];
        }
    }
    Tensor::new(&[b, c, order.h, order.w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radii(o: &ScanOrder) -> Vec<usize> {
        o.perm.iter().map(|&i| ring_radius(o.h, o.w, i)).collect()
    }

    #[test]
    fn cfds_four_by_four_shells() {
        let o = cfds_order(4, 4, 0).unwrap();
        assert_eq!(o.perm[0], 10);
        let r = radii(&o);
        let sizes: Vec<usize> = (0..=2).map(|k| r.iter().filter(|&&v| v == k).count()).collect();
        assert_eq!(sizes, vec![1, 8, 7]);
        // top-left clockwise on the first full ring starts at (1, 1)
        assert_eq!(&o.perm[1..4], &[5, 6, 7]);
    }

    #[test]
    fn cfds_paths_start_at_named_corners() {
        let (h, w) = (5, 5);
        let starts: Vec<usize> = (0..4).map(|p| cfds_order(h, w, p).unwrap().perm[1]).collect();
        // ring 1 around (2, 2): corners (1,1)=6, (1,3)=8, (3,1)=16, (3,3)=18
        assert_eq!(starts, vec![6, 8, 16, 18]);
        let tl_cw = cfds_order(h, w, 0).unwrap();
        assert_eq!(tl_cw.perm[2], 7);
        let tr_ccw = cfds_order(h, w, 1).unwrap();
        assert_eq!(tr_ccw.perm[2], 7);
        let bl_ccw = cfds_order(h, w, 2).unwrap();
        assert_eq!(bl_ccw.perm[2], 17);
        let br_cw = cfds_order(h, w, 3).unwrap();
        assert_eq!(br_cw.perm[2], 17);
    }

    #[test]
    fn cfds_rejects_bad_path() {
        assert!(cfds_order(4, 4, 4).is_err());
        assert!(cfds_order_extended(4, 4, 7).is_ok());
        assert!(cfds_order_extended(4, 4, 8).is_err());
        assert!(cfds_order(1, 4, 0).is_err());
    }

    #[test]
    fn cfds_paths_are_distinct() {
        for (h, w) in [(3, 3), (4, 7), (8, 8), (5, 6)] {
            let orders: Vec<_> = (0..8).map(|p| cfds_order_extended(h, w, p).unwrap().perm).collect();
            for i in 0..8 {
                for j in i + 1..8 {
                    assert_ne!(orders[i], orders[j], "{h}x{w} paths {i},{j}");
                }
            }
        }
    }

    #[test]
    fn local_first_window_and_degenerate_case() {
        let o = local_order(8, 8, 4).unwrap();
        let mut first: Vec<usize> = o.perm[..16].to_vec();
        first.sort();
        let want: Vec<usize> = (0..4).flat_map(|y| (0..4).map(move |x| y * 8 + x)).collect();
        assert_eq!(first, want);
        assert_eq!(local_order(6, 6, 6).unwrap().perm, raster_order(6, 6, 0).unwrap().perm);
        assert!(local_order(8, 6, 4).is_err());
        assert!(local_order(8, 8, 0).is_err());
    }

    #[test]
    fn local_steps_stay_inside_window() {
        let (h, w, win) = (8, 8, 4);
        for variant in 0..4 {
            let o = local_order_variant(h, w, win, variant).unwrap();
            assert!(o.is_bijection());
            for t in 0..o.len() - 1 {
                if t / (win * win) != (t + 1) / (win * win) {
                    continue;
                }
                let (a, b) = (o.perm[t], o.perm[t + 1]);
                let dy = (a / w).abs_diff(b / w);
                let dx = (a % w).abs_diff(b % w);
                assert!(dy.max(dx) <= win - 1);
                assert_eq!(((a / w) / win, (a % w) / win), ((b / w) / win, (b % w) / win));
            }
        }
    }

    #[test]
    fn raster_paths() {
        assert_eq!(raster_order(2, 2, 0).unwrap().perm, vec![0, 1, 2, 3]);
        let p0 = raster_order(3, 4, 0).unwrap().perm;
        let mut p1 = raster_order(3, 4, 1).unwrap().perm;
        p1.reverse();
        assert_eq!(p0, p1);
        assert_eq!(raster_order(2, 2, 2).unwrap().perm, vec![2, 0, 3, 1]);
        assert_eq!(raster_order(2, 2, 3).unwrap().perm, vec![1, 3, 0, 2]);
        assert!(raster_order(2, 2, 4).is_err());
    }

    #[test]
    fn serialize_examples() {
        let x = Tensor::from_fn(&[1, 1, 4, 4], |i| i as f64);
        let o = cfds_order(4, 4, 0).unwrap();
        let seq = serialize(&x, &o).unwrap();
        assert_eq!(seq.shape(), &[1, 1, 16]);
        assert_eq!(seq.data()[0], 10.0);
        let c = Tensor::full(&[2, 3, 4, 4], 1.5);
        assert!(serialize(&c, &o).unwrap().data().iter().all(|&v| v == 1.5));
        assert!(serialize(&Tensor::zeros(&[1, 1, 4, 5]), &o).is_err());
    }

    #[test]
    fn from_parts_rejects_duplicates() {
        assert!(ScanOrder::from_parts(2, 2, vec![0, 1, 1, 3], ScanKind::Raster, 0, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cfds_bijective_and_monotone(h in 2usize..24, w in 2usize..24, path in 0usize..8) {
                let o = cfds_order_extended(h, w, path).unwrap();
                prop_assert!(o.is_bijection());
                let r = radii(&o);
                prop_assert!(r.windows(2).all(|p| p[0] <= p[1]));
            }

            #[test]
            fn round_trip_is_exact(h in 1usize..5, w in 1usize..5, kind in 0usize..3, seed in any::<u64>()) {
                let (h, w) = (2 * h, 2 * w);
                let o = match kind {
                    0 => cfds_order(h, w, (seed % 4) as usize).unwrap(),
                    1 => local_order_variant(h, w, 2, (seed % 4) as usize).unwrap(),
                    _ => raster_order(h, w, (seed % 4) as usize).unwrap(),
                };
                let x = Tensor::from_fn(&[2, 3, h, w], |i| ((i as u64).wrapping_mul(seed | 1) % 1009) as f64 * 0.37 - 11.0);
                let back = deserialize(&serialize(&x, &o).unwrap(), &o).unwrap();
                prop_assert_eq!(back, x);
            }
        }
    }
}
