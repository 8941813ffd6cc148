use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64`. Four-dimensional tensors use the
/// batch × channels × height × width layout.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Invariant(format!(
                "tensor dimensions must be >= 1, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Invariant(format!(
                "shape {shape:?} holds {n} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor dimensions must be >= 1, got {shape:?}"
        );
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    /// 2D image tensor of shape `[h, w]`.
    pub fn image(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[h, w], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Returns `(b, c, h, w)` or a shape error naming `op`.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(Error::Shape {
                op,
                expected: vec![0; 4],
                got: self.shape.clone(),
            }),
        }
    }

    /// Returns `(h, w)` for a rank-2 tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [h, w] => Ok((h, w)),
            _ => Err(Error::Shape {
                op,
                expected: vec![0; 2],
                got: self.shape.clone(),
            }),
        }
    }

    pub fn ensure_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same_shape(other, "zip_map")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// One `h × w` plane of a 4D tensor.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let (_, ch, h, w) = self.dims4("plane").expect("plane on non-4D tensor");
        let hw = h * w;
        let start = (b * ch + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let (_, ch, h, w) = self.dims4("plane_mut").expect("plane on non-4D tensor");
        let hw = h * w;
        let start = (b * ch + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Concatenates 4D tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("concat_channels", "no inputs"))?;
        let (b, _, h, w) = first.dims4("concat_channels")?;
        let mut total_c = 0;
        for p in parts {
            let (pb, pc, ph, pw) = p.dims4("concat_channels")?;
            if (pb, ph, pw) != (b, h, w) {
                return Err(Error::shape("concat_channels", first.shape(), p.shape()));
            }
            total_c += pc;
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(b * total_c * hw);
        for bi in 0..b {
            for p in parts {
                let pc = p.shape[1];
                data.extend_from_slice(&p.data[bi * pc * hw..(bi + 1) * pc * hw]);
            }
        }
        Tensor::new(&[b, total_c, h, w], data)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert!(Tensor::new(&[], vec![]).is_err());
    }

    #[test]
    fn concat_interleaves_per_batch() {
        let a = Tensor::from_fn(&[2, 1, 1, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 2, 1, 2], |i| 10.0 + i as f64);
        let c = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3, 1, 2]);
        assert_eq!(
            c.data(),
            &[0.0, 1.0, 10.0, 11.0, 12.0, 13.0, 2.0, 3.0, 14.0, 15.0, 16.0, 17.0]
        );
    }
}
