//! Little-endian binary containers and PGM output.
//!
//! | format | layout |
//! |--------|--------|
//! | tensor  | `PASM`, version u8, rank u8, dims u32 × rank, f64 payload |
//! | mask    | `PASM`, `M`, H u32, W u32, pattern u8, acceleration u8, seed u64, H·W bytes |
//! | order   | `PASM`, `O`, kind u8, path u32, variant u8, H u32, W u32, H·W indices u32 |
//! | weights | `PASM`, `W`, version u8, count u32, then per entry name length u32, UTF-8 name, tensor |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kspace::{default_center_fraction, MaskPattern, SamplingMask};
use crate::scan::{ScanKind, ScanOrder};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PASM";
pub const TENSOR_VERSION: u8 = 1;
pub const WEIGHTS_VERSION: u8 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], format: &'static str) -> Self {
        Self { buf, pos: 0, format }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            format: self.format,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(self.err(format!("truncated at byte {}", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, subtype: Option<u8>) -> Result<()> {
        if self.take(4)? != MAGIC {
            return Err(self.err("bad magic"));
        }
        if let Some(s) = subtype {
            let got = self.u8()?;
            if got != s {
                return Err(self.err(format!("expected subtype `{}`, got byte {got}", s as char)));
            }
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::param("io", format!("{what} {n} does not fit in u32")))
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) -> Result<()> {
    out.extend_from_slice(MAGIC);
    out.push(TENSOR_VERSION);
    out.push(u8::try_from(t.rank()).map_err(|_| Error::param("io", "rank exceeds 255"))?);
    for &d in t.shape() {
        out.extend_from_slice(&u32_of(d, "dimension")?.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn get_tensor(r: &mut Reader) -> Result<Tensor> {
    r.magic(None)?;
    let version = r.u8()?;
    if version != TENSOR_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let rank = r.u8()? as usize;
    let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.err("size overflow"))?;
    if len.saturating_mul(8) > r.buf.len() - r.pos {
        return Err(r.err("payload shorter than shape"));
    }
    let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Tensor::new(&shape, data)
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 8 * t.len());
    put_tensor(&mut out, t)?;
    Ok(out)
}

pub fn decode_tensor(buf: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(buf, "PASM-T");
    let t = get_tensor(&mut r)?;
    r.finish()?;
    Ok(t)
}

pub fn encode_mask(m: &SamplingMask) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(23 + m.grid.len());
    out.extend_from_slice(MAGIC);
    out.push(b'M');
    out.extend_from_slice(&u32_of(m.height, "height")?.to_le_bytes());
    out.extend_from_slice(&u32_of(m.width, "width")?.to_le_bytes());
    out.push(m.pattern.code());
    out.push(m.acceleration);
    out.extend_from_slice(&m.seed.to_le_bytes());
    out.extend(m.grid.iter().map(|&b| b as u8));
    Ok(out)
}

pub fn decode_mask(buf: &[u8]) -> Result<SamplingMask> {
    let mut r = Reader::new(buf, "PASM-M");
    r.magic(Some(b'M'))?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let code = r.u8()?;
    let pattern = MaskPattern::from_code(code).ok_or_else(|| r.err(format!("unknown pattern code {code}")))?;
    let acceleration = r.u8()?;
    let seed = r.u64()?;
    let bytes = r.take(height.checked_mul(width).ok_or_else(|| r.err("size overflow"))?)?;
    let grid = bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(r.err(format!("mask byte {b} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let center_fraction = match pattern {
        MaskPattern::Cartesian => default_center_fraction(acceleration),
        MaskPattern::Radial => 0.0,
        MaskPattern::Full => 1.0,
    };
    Ok(SamplingMask {
        height,
        width,
        grid,
        pattern,
        acceleration,
        center_fraction,
        seed,
    })
}

pub fn encode_order(o: &ScanOrder) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(19 + 4 * o.perm.len());
    out.extend_from_slice(MAGIC);
    out.push(b'O');
    out.push(o.kind.code());
    out.extend_from_slice(&u32_of(o.path_id, "path id")?.to_le_bytes());
    out.push(u8::try_from(o.variant).map_err(|_| Error::param("io", "variant exceeds 255"))?);
    out.extend_from_slice(&u32_of(o.h, "height")?.to_le_bytes());
    out.extend_from_slice(&u32_of(o.w, "width")?.to_le_bytes());
    for &i in &o.perm {
        out.extend_from_slice(&u32_of(i, "index")?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_order(buf: &[u8]) -> Result<ScanOrder> {
    let mut r = Reader::new(buf, "PASM-O");
    r.magic(Some(b'O'))?;
    let code = r.u8()?;
    let kind = ScanKind::from_code(code).ok_or_else(|| r.err(format!("unknown scan kind {code}")))?;
    let path_id = r.u32()? as usize;
    let variant = r.u8()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let len = h.checked_mul(w).ok_or_else(|| r.err("size overflow"))?;
    if len.saturating_mul(4) != r.buf.len() - r.pos {
        return Err(r.err("index payload does not match grid size"));
    }
    let perm = (0..len).map(|_| r.u32().map(|i| i as usize)).collect::<Result<Vec<_>>>()?;
    ScanOrder::from_parts(h, w, perm, kind, path_id, variant)
}

pub fn encode_weights(params: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(b'W');
    out.push(WEIGHTS_VERSION);
    out.extend_from_slice(&u32_of(params.len(), "entry count")?.to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&u32_of(name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_tensor(&mut out, t)?;
    }
    Ok(out)
}

pub fn decode_weights(buf: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader::new(buf, "PASM-W");
    r.magic(Some(b'W'))?;
    let version = r.u8()?;
    if version != WEIGHTS_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.err("parameter name is not UTF-8"))?
            .to_string();
        out.push((name, get_tensor(&mut r)?));
    }
    r.finish()?;
    Ok(out)
}

/// Binary PGM (P5), 8 bits, values clamped to `[lo, hi]` and scaled.
pub fn encode_pgm(img: &Tensor, lo: f64, hi: f64) -> Result<Vec<u8>> {
    let (h, w) = img.dims2("encode_pgm")?;
    if !(hi > lo) {
        return Err(Error::param("encode_pgm", format!("empty range [{lo}, {hi}]")));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|&v| {
        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        if t.is_nan() { 0 } else { (t * 255.0).round() as u8 }
    }));
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write_file(path, &encode_tensor(t)?)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

pub fn write_mask(path: &Path, m: &SamplingMask) -> Result<()> {
    write_file(path, &encode_mask(m)?)
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    decode_mask(&fs::read(path)?)
}

pub fn write_order(path: &Path, o: &ScanOrder) -> Result<()> {
    write_file(path, &encode_order(o)?)
}

pub fn read_order(path: &Path) -> Result<ScanOrder> {
    decode_order(&fs::read(path)?)
}

pub fn write_weights(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    write_file(path, &encode_weights(params)?)
}

pub fn read_weights(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode_weights(&fs::read(path)?)
}

/// Writes an image as PGM, scaling `[lo, hi]` to the full gray range.
pub fn write_pgm(path: &Path, img: &Tensor, lo: f64, hi: f64) -> Result<()> {
    write_file(path, &encode_pgm(img, lo, hi)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{make_cartesian_mask, make_radial_mask};
    use crate::scan::{cfds_order, local_order_variant};
    use proptest::prelude::*;

    #[test]
    fn tensor_header_layout() {
        let t = Tensor::new(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        let b = encode_tensor(&t).unwrap();
        assert_eq!(&b[..6], b"PASM\x01\x02");
        assert_eq!(&b[6..14], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(b.len(), 14 + 48);
        assert_eq!(decode_tensor(&b).unwrap(), t);
    }

    #[test]
    fn rejects_truncated_and_trailing() {
        let b = encode_tensor(&Tensor::zeros(&[4])).unwrap();
        assert!(decode_tensor(&b[..b.len() - 1]).is_err());
        let mut longer = b.clone();
        longer.push(0);
        assert!(decode_tensor(&longer).is_err());
        assert!(decode_tensor(b"NOPE").is_err());
    }

    #[test]
    fn mask_round_trip() {
        for m in [
            make_cartesian_mask(32, 32, 4, 9).unwrap(),
            make_radial_mask(16, 24, 2, 3).unwrap(),
        ] {
            let b = encode_mask(&m).unwrap();
            assert_eq!(b.len(), 23 + m.grid.len());
            assert_eq!(decode_mask(&b).unwrap(), m);
        }
    }

    #[test]
    fn order_round_trip() {
        for o in [cfds_order(6, 8, 3).unwrap(), local_order_variant(8, 8, 4, 2).unwrap()] {
            assert_eq!(decode_order(&encode_order(&o).unwrap()).unwrap(), o);
        }
        let mut b = encode_order(&cfds_order(4, 4, 0).unwrap()).unwrap();
        let n = b.len();
        b[n - 4] = b[n - 8];
        assert!(decode_order(&b).is_err(), "duplicate index must be rejected");
    }

    #[test]
    fn pgm_header_and_scaling() {
        let img = Tensor::image(2, 3, vec![0.0, 0.5, 1.0, -1.0, 2.0, f64::NAN]).unwrap();
        let b = encode_pgm(&img, 0.0, 1.0).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&b[..header.len()], header);
        assert_eq!(&b[header.len()..], &[0, 128, 255, 0, 255, 0]);
    }

    proptest! {
        #[test]
        fn tensor_round_trip_bit_exact(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
            let mut s = seed;
            let t = Tensor::from_fn(&dims, |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f64::from_bits(s >> 2)
            });
            let back = decode_tensor(&encode_tensor(&t).unwrap()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn weights_round_trip(n in 0usize..5, len in 1usize..6) {
            let params: Vec<(String, Tensor)> = (0..n)
                .map(|i| (format!("p.{i}"), Tensor::from_fn(&[len], |j| (i * 10 + j) as f64 - 0.25)))
                .collect();
            prop_assert_eq!(decode_weights(&encode_weights(&params).unwrap()).unwrap(), params);
        }
    }
}
