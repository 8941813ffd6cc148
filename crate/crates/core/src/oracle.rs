//! Slow, direct reference implementations used to cross-check the fast
//! paths. Nothing here shares code with the routines it verifies.

use std::f64::consts::PI;

use rand::Rng;

use crate::ddcfm::{DdcfmState, GateConfig};
use crate::fourier::ComplexGrid;
use crate::numerics::{ConvSpec, NormParams};
use crate::ssm::{DiscreteSteps, SsmParams};
use crate::tensor::Tensor;

/// Direct double-sum 2D DFT of a real image, centered like
/// [`dft2_centered`](crate::fourier::dft2_centered).
pub fn naive_dft2(img: &Tensor) -> ComplexGrid {
    let (h, w) = img.dims2("naive_dft2").expect("rank-2 image");
    let (cy, cx) = (h / 2, w / 2);
    let mut out = ComplexGrid::zeros(h, w);
    for ky in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let t = -2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                    let v = img.data()[y * w + x];
                    re += v * t.cos();
                    im += v * t.sin();
                }
            }
            let idx = ((ky + cy) % h) * w + (kx + cx) % w;
            out.re[idx] = re;
            out.im[idx] = im;
        }
    }
    out
}

/// Random stable step parameters: `a_bar` in `[0, 1)`, `b_bar`, `c` in `[-1, 1)`.
pub fn random_steps(len: usize, state: usize, rng: &mut impl Rng) -> DiscreteSteps {
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..len * state).map(|_| rng.random_range(lo..hi)).collect() };
    let a_bar = draw(0.0, 1.0);
    let b_bar = draw(-1.0, 1.0);
    let c = draw(-1.0, 1.0);
    DiscreteSteps { state, a_bar, b_bar, c }
}

type Dense = Vec<Vec<f64>>;

fn identity(n: usize) -> Dense {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Matrix exponential by scaling and squaring with a Taylor core.
fn expm(m: &Dense) -> Dense {
    let n = m.len();
    let norm = m.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 2f64.powi(-squarings);
    let scaled: Dense = m.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=24 {
        term = matmul(&term, &scaled);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
fn solve(m: &Dense, rhs: &[f64]) -> Vec<f64> {
    let n = m.len();
    let mut a: Dense = m.iter().zip(rhs).map(|(r, &b)| {
        let mut row = r.clone();
        row.push(b);
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][n] - s) / a[row][row];
    }
    x
}

/// Dense-matrix zero-order hold: `(exp(ΔA), (ΔA)^-1 (exp(ΔA) - I) Δ B)`.
pub fn zoh_dense(a: &Dense, b: &[f64], delta: f64) -> (Dense, Vec<f64>) {
    let n = a.len();
    let da: Dense = a.iter().map(|r| r.iter().map(|v| v * delta).collect()).collect();
    let a_bar = expm(&da);
    let mut em1 = a_bar.clone();
    for (i, row) in em1.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    let db: Vec<f64> = b.iter().map(|v| v * delta).collect();
    let rhs: Vec<f64> = (0..n).map(|i| (0..n).map(|k| em1[i][k] * db[k]).sum()).collect();
    // (ΔA)^-1 and exp(ΔA) - I commute, so solve ΔA x = (exp(ΔA) - I) ΔB.
    let b_bar = solve(&da, &rhs);
    (a_bar, b_bar)
}

/// Step-by-step interpreter of the selective SSM using dense discretization.
pub fn selective_ssm_reference(seq: &Tensor, p: &SsmParams) -> Tensor {
    let (b, c, l) = match *seq.shape() {
        [b, c, l] => (b, c, l),
        _ => panic!("sequence must be rank 3"),
    };
    let n = p.n;
    let a_dense: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { p.a[i] } else { 0.0 }).collect())
        .collect();
    let x = |bi: usize, ch: usize, t: usize| seq.data()[(bi * c + ch) * l + t];
    let mut out = vec![0.0; seq.len()];
    for bi in 0..b {
        let mut h = vec![vec![0.0; n]; c];
        for t in 0..l {
            let xt: Vec<f64> = (0..c).map(|ch| x(bi, ch, t)).collect();
            let proj = |w: &[f64]| -> f64 { w.iter().zip(&xt).map(|(u, v)| u * v).sum() };
            let delta = (1.0 + (proj(&p.delta_proj) + p.delta_bias).exp()).ln();
            let bt: Vec<f64> = (0..n).map(|k| proj(&p.b_proj[k * c..(k + 1) * c])).collect();
            let ct: Vec<f64> = (0..n).map(|k| proj(&p.c_proj[k * c..(k + 1) * c])).collect();
            let (a_bar, b_bar) = zoh_dense(&a_dense, &bt, delta);
            for ch in 0..c {
                let prev = h[ch].clone();
                for i in 0..n {
                    h[ch][i] = (0..n).map(|k| a_bar[i][k] * prev[k]).sum::<f64>() + b_bar[i] * xt[ch];
                }
                let y: f64 = (0..n).map(|i| ct[i] * h[ch][i]).sum();
                out[(bi * c + ch) * l + t] = y + p.skip * xt[ch];
            }
        }
    }
    Tensor::new(&[b, c, l], out).unwrap()
}

pub fn random_ddcfm_state(channels: usize, rng: &mut impl Rng) -> DdcfmState {
    let norm = |rng: &mut dyn rand::RngCore| NormParams {
        weight: (0..channels).map(|_| rng.random_range(-1.0..2.0)).collect(),
        offset: (0..channels).map(|_| rng.random_range(-0.5..0.5)).collect(),
        eps: 1e-5,
    };
    let norm_a = norm(rng);
    let norm_b = norm(rng);
    let mut fusion = ConvSpec::zeros(2 * channels, channels, (1, 1), 1, 0);
    fusion.weights.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    fusion.bias.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    DdcfmState { norm_a, norm_b, fusion }
}

/// Channels gated by repeatedly taking the smallest remaining importance.
fn gated_channels(omega: &[f64], cfg: &GateConfig) -> Vec<bool> {
    let c = omega.len();
    let k = cfg.min_gated.max((cfg.fraction * c as f64) as usize).min(c);
    let key = |i: usize| if cfg.use_abs { omega[i].abs() } else { omega[i] };
    let mut gated = vec![false; c];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..c {
            if !gated[i] && best.is_none_or(|b| key(i) < key(b)) {
                best = Some(i);
            }
        }
        gated[best.unwrap()] = true;
    }
    gated
}

fn normalize_reference(x: &Tensor, p: &NormParams) -> Tensor {
    let (b, c, h, w) = x.dims4("norm").unwrap();
    let mut out = x.clone();
    for bi in 0..b {
        for ch in 0..c {
            let plane: Vec<f64> = (0..h * w).map(|i| x.data()[(bi * c + ch) * h * w + i]).collect();
            let mean = plane.iter().sum::<f64>() / plane.len() as f64;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane.len() as f64;
            for i in 0..h * w {
                out.data_mut()[(bi * c + ch) * h * w + i] =
                    p.weight[ch] * (plane[i] - mean) / (var + p.eps).sqrt() + p.offset[ch];
            }
        }
    }
    out
}

/// Element-by-element evaluation of the fusion module.
pub fn ddcfm_reference(f_a: &Tensor, f_b: &Tensor, state: &DdcfmState, cfg: &GateConfig) -> Tensor {
    let (b, c, h, w) = f_a.dims4("ddcfm").unwrap();
    let (a, bb) = if cfg.normalized_features {
        (normalize_reference(f_a, &state.norm_a), normalize_reference(f_b, &state.norm_b))
    } else {
        (f_a.clone(), f_b.clone())
    };
    let gate_a = gated_channels(&state.norm_a.weight, cfg);
    let gate_b = gated_channels(&state.norm_b.weight, cfg);
    let at = |t: &Tensor, bi: usize, ch: usize, i: usize| t.data()[(bi * c + ch) * h * w + i];
    let mut out = vec![0.0; b * c * h * w];
    for bi in 0..b {
        for o in 0..c {
            for i in 0..h * w {
                let mut acc = state.fusion.bias[o];
                for ch in 0..c {
                    let ea = if gate_a[ch] { at(&a, bi, ch, i) * at(&bb, bi, ch, i) } else { at(&a, bi, ch, i) };
                    let eb = if gate_b[ch] { at(&bb, bi, ch, i) * at(&a, bi, ch, i) } else { at(&bb, bi, ch, i) };
                    acc += state.fusion.weights.data()[o * 2 * c + ch] * ea;
                    acc += state.fusion.weights.data()[o * 2 * c + c + ch] * eb;
                }
                out[(bi * c + o) * h * w + i] = acc;
            }
        }
    }
    Tensor::new(&[b, c, h, w], out).unwrap()
}

/// Mean SSIM evaluated window by window with explicit weighted moments
/// (11×11 Gaussian, σ = 1.5, valid windows only).
pub fn ssim_reference(x: &Tensor, y: &Tensor, data_range: f64) -> f64 {
    let (h, w) = x.dims2("ssim").unwrap();
    let mut g = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (u, row) in g.iter_mut().enumerate() {
        for (v, val) in row.iter_mut().enumerate() {
            let d2 = ((u as f64 - 5.0).powi(2) + (v as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5);
            *val = (-d2).exp();
            total += *val;
        }
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let px = |i: usize, j: usize| x.data()[i * w + j];
    let py = |i: usize, j: usize| y.data()[i * w + j];
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..=h - 11 {
        for j in 0..=w - 11 {
            let (mut mx, mut my) = (0.0, 0.0);
            for u in 0..11 {
                for v in 0..11 {
                    let wt = g[u][v] / total;
                    mx += wt * px(i + u, j + v);
                    my += wt * py(i + u, j + v);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for u in 0..11 {
                for v in 0..11 {
                    let wt = g[u][v] / total;
                    let dx = px(i + u, j + v) - mx;
                    let dy = py(i + u, j + v) - my;
                    vx += wt * dx * dx;
                    vy += wt * dy * dy;
                    cxy += wt * dx * dy;
                }
            }
            sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(x: &Tensor, step: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for p in 0..x.len() {
        let orig = probe.data()[p];
        probe.data_mut()[p] = orig + step;
        let up = f(&probe);
        probe.data_mut()[p] = orig - step;
        let down = f(&probe);
        probe.data_mut()[p] = orig;
        grad.data_mut()[p] = (up - down) / (2.0 * step);
    }
    grad
}

/// Random `[0, 1]` image pair whose hybrid loss is smooth in a neighbourhood
/// of `out`: pixel differences, amplitude differences, amplitudes and
/// (non-self-conjugate) phase differences all stay clear of their kinks.
pub fn kink_free_pair(h: usize, w: usize, rng: &mut impl Rng) -> (Tensor, Tensor) {
    const MARGIN: f64 = 1e-3;
    loop {
        let out = Tensor::from_fn(&[h, w], |_| rng.random_range(0.0..1.0));
        let gt = Tensor::from_fn(&[h, w], |_| rng.random_range(0.0..1.0));
        if out.data().iter().zip(gt.data()).any(|(a, b)| (a - b).abs() < MARGIN) {
            continue;
        }
        let (so, sg) = (naive_dft2(&out), naive_dft2(&gt));
        let ok = (0..h * w).all(|k| {
            let (ao, ag) = (so.abs_at(k), sg.abs_at(k));
            if ao < 10.0 * MARGIN || ag < 10.0 * MARGIN || (ao - ag).abs() < MARGIN {
                return false;
            }
            if so.mirror_index(k) == k {
                return true;
            }
            let d = (so.im[k].atan2(so.re[k]) - sg.im[k].atan2(sg.re[k])).rem_euclid(2.0 * PI);
            d > MARGIN && (d - PI).abs() > MARGIN && d < 2.0 * PI - MARGIN
        });
        if ok {
            return (out, gt);
        }
    }
}
