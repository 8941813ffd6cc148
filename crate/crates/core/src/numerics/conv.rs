use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters of a zero-padded 2D convolution.
///
/// For [`conv2d`] the weights are laid out `(out, in, kh, kw)`. For
/// [`conv_transpose2d`] they are laid out `(in, out, kh, kw)`, the same
/// convention as the adjoint: [`ConvSpec::adjoint`] swaps the channel labels
/// while keeping the weight buffer untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl ConvSpec {
    /// Zero-initialized spec for a forward convolution.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weights: Tensor::zeros(&[out_channels, in_channels, kernel.0, kernel.1]),
            bias: vec![0.0; out_channels],
        }
    }

    /// Zero-initialized spec for a transposed convolution.
    pub fn zeros_transposed(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            weights: Tensor::zeros(&[in_channels, out_channels, kernel.0, kernel.1]),
            ..Self::zeros(in_channels, out_channels, kernel, stride, padding)
        }
    }

    /// Spec whose transposed convolution is the adjoint of this spec's
    /// forward convolution (bias dropped).
    pub fn adjoint(&self) -> Self {
        Self {
            in_channels: self.out_channels,
            out_channels: self.in_channels,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            weights: self.weights.clone(),
            bias: vec![0.0; self.in_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn validate(&self, op: &'static str, weight_shape: [usize; 4]) -> Result<()> {
        if self.weights.shape() != weight_shape {
            return Err(Error::shape(op, &weight_shape, self.weights.shape()));
        }
        if self.bias.len() != self.out_channels {
            return Err(Error::shape(op, &[self.out_channels], &[self.bias.len()]));
        }
        if self.stride == 0 {
            return Err(Error::param(op, "stride must be >= 1"));
        }
        Ok(())
    }
}

/// Output extent of a forward convolution along one axis.
fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

/// Zero-padded cross-correlation plus bias.
pub fn conv2d(x: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    const OP: &str = "conv2d";
    let (b, c, h, w) = x.dims4(OP)?;
    let (kh, kw) = spec.kernel;
    spec.validate(OP, [spec.out_channels, spec.in_channels, kh, kw])?;
    if c != spec.in_channels {
        return Err(Error::shape(OP, &[b, spec.in_channels, h, w], x.shape()));
    }
    let (s, p) = (spec.stride, spec.padding);
    let (oh, ow) = match (conv_out_len(h, kh, s, p), conv_out_len(w, kw, s, p)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::param(
                OP,
                format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {p})"),
            ))
        }
    };

    let oc = spec.out_channels;
    let wt = spec.weights.data();
    let mut out = Tensor::zeros(&[b, oc, oh, ow]);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, dst)| {
            let (bi, o) = (plane / oc, plane % oc);
            dst.fill(spec.bias[o]);
            for i in 0..c {
                let src = x.plane(bi, i);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wt[((o * c + i) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &src[iy as usize * w..(iy as usize + 1) * w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    *d += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Transposed convolution (scatter-add form), the adjoint of [`conv2d`].
///
/// Output extent is `(H - 1) * stride - 2 * pad + k` per axis.
pub fn conv_transpose2d(x: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    const OP: &str = "conv_transpose2d";
    let (b, c, h, w) = x.dims4(OP)?;
    let (kh, kw) = spec.kernel;
    spec.validate(OP, [spec.in_channels, spec.out_channels, kh, kw])?;
    if c != spec.in_channels {
        return Err(Error::shape(OP, &[b, spec.in_channels, h, w], x.shape()));
    }
    let (s, p) = (spec.stride, spec.padding);
    let full_h = (h - 1) * s + kh;
    let full_w = (w - 1) * s + kw;
    if full_h <= 2 * p || full_w <= 2 * p {
        return Err(Error::param(
            OP,
            format!("padding {p} leaves no output for {h}x{w} input"),
        ));
    }
    let (oh, ow) = (full_h - 2 * p, full_w - 2 * p);

    let oc = spec.out_channels;
    let wt = spec.weights.data();
    let mut out = Tensor::zeros(&[b, oc, oh, ow]);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, dst)| {
            let (bi, o) = (plane / oc, plane % oc);
            dst.fill(spec.bias[o]);
            for i in 0..c {
                let src = x.plane(bi, i);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wt[((i * oc + o) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for iy in 0..h {
                            let oy = (iy * s + ky) as isize - p as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let row = &src[iy * w..(iy + 1) * w];
                            let drow = &mut dst[oy as usize * ow..(oy as usize + 1) * ow];
                            for (ix, &v) in row.iter().enumerate() {
                                let ox = (ix * s + kx) as isize - p as isize;
                                if ox >= 0 && ox < ow as isize {
                                    drow[ox as usize] += wv * v;
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn random_spec(i: usize, o: usize, k: usize, s: usize, p: usize, rng: &mut ChaCha8Rng) -> ConvSpec {
        let mut spec = ConvSpec::zeros(i, o, (k, k), s, p);
        spec.weights = random_tensor(&[o, i, k, k], rng);
        spec.bias = (0..o).map(|_| rng.random_range(-1.0..1.0)).collect();
        spec
    }

    /// Direct quadruple-loop cross-correlation.
    fn conv_oracle(x: &Tensor, spec: &ConvSpec) -> Tensor {
        let (b, c, h, w) = x.dims4("oracle").unwrap();
        let (kh, kw) = spec.kernel;
        let (s, p) = (spec.stride, spec.padding as isize);
        let oh = (h + 2 * spec.padding - kh) / s + 1;
        let ow = (w + 2 * spec.padding - kw) / s + 1;
        let o = spec.out_channels;
        let mut out = vec![0.0; b * o * oh * ow];
        for bi in 0..b {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = spec.bias[oc];
                        for ic in 0..c {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * s + ky) as isize - p;
                                    let ix = (ox * s + kx) as isize - p;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += spec.weights.data()[((oc * c + ic) * kh + ky) * kw + kx]
                                        * x.data()[((bi * c + ic) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out[((bi * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Tensor::new(&[b, o, oh, ow], out).unwrap()
    }

    #[test]
    fn uniform_sum_at_center() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let mut spec = ConvSpec::zeros(1, 1, (3, 3), 1, 1);
        spec.weights = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    fn identity_spec() -> ConvSpec {
        let mut spec = ConvSpec::zeros(1, 1, (3, 3), 1, 1);
        spec.weights.data_mut()[4] = 1.0;
        spec
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&[2, 1, 5, 7], &mut rng);
        assert_eq!(conv2d(&x, &identity_spec()).unwrap(), x);
        assert_eq!(conv_transpose2d(&x, &identity_spec()).unwrap(), x);
    }

    #[test]
    fn matches_quadruple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor(&[2, 4, 8, 8], &mut rng);
        for (k, s, p) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (5, 1, 2), (2, 2, 0)] {
            let spec = random_spec(4, 6, k, s, p, &mut rng);
            let got = conv2d(&x, &spec).unwrap();
            let want = conv_oracle(&x, &spec);
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (k, s, p, n) in [(3, 1, 1, 8), (3, 2, 1, 9), (2, 2, 0, 8), (4, 2, 1, 8)] {
            let mut spec = random_spec(3, 5, k, s, p, &mut rng);
            spec.bias.fill(0.0);
            let x = random_tensor(&[2, 3, n, n], &mut rng);
            let y_shape = conv2d(&x, &spec).unwrap().shape().to_vec();
            let y = random_tensor(&y_shape, &mut rng);
            let back = conv_transpose2d(&y, &spec.adjoint()).unwrap();
            assert_eq!(back.shape(), x.shape());
            let lhs = conv2d(&x, &spec).unwrap().dot(&y).unwrap();
            let rhs = x.dot(&back).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn stride_two_scatter_of_ones() {
        let x = Tensor::full(&[1, 1, 2, 2], 1.0);
        let mut spec = ConvSpec::zeros_transposed(1, 1, (2, 2), 2, 0);
        spec.weights = Tensor::full(&[1, 1, 2, 2], 1.0);
        let y = conv_transpose2d(&x, &spec).unwrap();
        assert_eq!(y, Tensor::full(&[1, 1, 4, 4], 1.0));
    }

    #[test]
    fn linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut spec = random_spec(2, 3, 3, 1, 1, &mut rng);
        spec.bias.fill(0.0);
        let x = random_tensor(&[1, 2, 6, 6], &mut rng);
        let y = random_tensor(&[1, 2, 6, 6], &mut rng);
        let (a, b) = (0.7, -1.3);
        let mix = x.zip_map(&y, |u, v| a * u + b * v).unwrap();
        let lhs = conv2d(&mix, &spec).unwrap();
        let rhs = conv2d(&x, &spec)
            .unwrap()
            .zip_map(&conv2d(&y, &spec).unwrap(), |u, v| a * u + b * v)
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let spec = ConvSpec::zeros(3, 1, (3, 3), 1, 1);
        assert!(matches!(conv2d(&x, &spec), Err(Error::Shape { .. })));
        let big = ConvSpec::zeros(2, 1, (7, 7), 1, 0);
        assert!(matches!(conv2d(&x, &big), Err(Error::Param { .. })));
    }
}
