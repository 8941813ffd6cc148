//! Acceptance suite: nine end-to-end checks, each with a runtime budget.
//!
//! Every criterion compares fast paths against the independent references
//! in [`crate::oracle`] or against an ordering observed on the phantom
//! suite. A criterion passes only when all of its checks hold and it
//! finishes within budget.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ddcfm::{cross_enhance, ddcfm_fuse, importance_threshold, GateConfig};
use crate::error::Result;
use crate::fourier::{dft2_centered, idft2_centered};
use crate::kspace::{
    make_cartesian_mask, make_phantom, make_radial_mask, swap_spectrum, undersample, zero_filled_magnitude, NoiseSpec,
    PhantomKind,
};
use crate::loss::{hybrid_loss, hybrid_loss_grad, phase_l1, toy_optimize, DEFAULT_WEIGHT};
use crate::metrics::{psnr, ssim, DEFAULT_DATA_RANGE};
use crate::net::{forward, frequency_branch, init_network, NetConfig};
use crate::oracle;
use crate::parallel::with_threads;
use crate::scan::{cfds_order, deserialize, local_order_variant, raster_order, ring_radius, serialize, ScanKind, ScanOrder};
use crate::ssm::{discretize, scan_parallel, scan_sequential, selective_ssm, SsmParams};
use crate::tensor::Tensor;

pub const CRITERIA: usize = 9;

/// Toy optimization settings used by criterion 8.
pub const TOY_SIZE: usize = 32;
pub const TOY_STEPS: usize = 200;
pub const TOY_LR: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {}: {} ({:.2}s of {}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

/// Outcome of the checks inside one criterion.
struct Outcome {
    ok: bool,
    detail: String,
}

impl Outcome {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self { ok, detail: detail.into() }
    }
}

fn timed(id: usize, name: &'static str, budget_s: u64, f: impl FnOnce() -> Result<Outcome>) -> CriterionReport {
    let start = Instant::now();
    let outcome = f().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_s);
    let mut detail = outcome.detail;
    if elapsed > budget {
        detail.push_str("; over time budget");
    }
    CriterionReport {
        id,
        name,
        passed: outcome.ok && elapsed <= budget,
        detail,
        elapsed,
        budget,
    }
}

/// The ten seeded Shepp-Logan phantoms: seeds 0..5 at 64×64, 5..10 at
/// 128×128.
pub fn phantom_suite() -> Result<Vec<(u64, Tensor)>> {
    (0..10u64)
        .map(|seed| {
            let n = if seed < 5 { 64 } else { 128 };
            Ok((seed, make_phantom(n, n, PhantomKind::SheppLogan, seed)?))
        })
        .collect()
}

/// PSNR and SSIM of both swapped reconstructions for one phantom, as
/// `[(psnr, ssim) of FS amplitude + US phase, (psnr, ssim) of US amplitude + FS phase]`.
/// The undersampled image is the magnitude zero-filled reconstruction.
pub fn swap_scores(img: &Tensor, seed: u64) -> Result<[(f64, f64); 2]> {
    let (h, w) = img.dims2("swap_scores")?;
    let us = zero_filled_magnitude(img, &make_cartesian_mask(h, w, 4, seed)?, &NoiseSpec::NONE)?;
    let fs_amp = swap_spectrum(img, &us)?;
    let fs_pha = swap_spectrum(&us, img)?;
    let score = |x: &Tensor| -> Result<(f64, f64)> {
        Ok((psnr(x, img, DEFAULT_DATA_RANGE)?, ssim(x, img, DEFAULT_DATA_RANGE)?))
    };
    Ok([score(&fs_amp)?, score(&fs_pha)?])
}

pub fn criterion_swap_ordering() -> CriterionReport {
    timed(1, "spectrum-swap ordering", 10, || {
        let mut hits = 0;
        for (seed, img) in phantom_suite()? {
            let [(p_amp, s_amp), (p_pha, s_pha)] = swap_scores(&img, seed)?;
            if p_amp > p_pha && s_pha > s_amp {
                hits += 1;
            }
        }
        Ok(Outcome::new(hits >= 8, format!("ordering held on {hits}/10 phantoms")))
    })
}

pub fn criterion_fourier() -> CriterionReport {
    timed(2, "Fourier correctness", 5, || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut dft_err, mut parseval_err, mut trip_err) = (0.0f64, 0.0f64, 0.0f64);
        for n in [8, 16] {
            for _ in 0..50 {
                let img = Tensor::from_fn(&[n, n], |_| rng.random_range(-1.0..1.0));
                let fast = dft2_centered(&img)?;
                let slow = oracle::naive_dft2(&img);
                for k in 0..fast.len() {
                    dft_err = dft_err.max((fast.re[k] - slow.re[k]).abs()).max((fast.im[k] - slow.im[k]).abs());
                }
                let e_img: f64 = img.data().iter().map(|v| v * v).sum();
                let e_spec: f64 =
                    fast.re.iter().zip(&fast.im).map(|(r, i)| r * r + i * i).sum::<f64>() / (n * n) as f64;
                parseval_err = parseval_err.max((e_img - e_spec).abs() / e_img);
                trip_err = trip_err.max(idft2_centered(&fast)?.max_abs_diff(&img)?);
            }
        }
        Ok(Outcome::new(
            dft_err < 1e-9 && parseval_err < 1e-8 && trip_err < 1e-9,
            format!("dft {dft_err:.1e}, parseval {parseval_err:.1e}, round trip {trip_err:.1e}"),
        ))
    })
}

fn serialize_round_trips(order: &ScanOrder, rng: &mut ChaCha8Rng) -> Result<bool> {
    let x = Tensor::from_fn(&[2, 3, order.h, order.w], |_| rng.random_range(-1.0..1.0));
    let back = deserialize(&serialize(&x, order)?, order)?;
    Ok(back.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()))
}

fn window_contained(order: &ScanOrder, window: usize) -> bool {
    order.perm.chunks(window * window).all(|chunk| {
        let key = |i: usize| ((i / order.w) / window, (i % order.w) / window);
        chunk.iter().all(|&i| key(i) == key(chunk[0]))
    })
}

pub fn criterion_scan_orders() -> CriterionReport {
    timed(3, "scan-order suite", 5, || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sizes = [4, 6, 8, 16, 32];
        let (mut checked, mut failures) = (0usize, Vec::new());
        for &h in &sizes {
            for &w in &sizes {
                let mut orders = Vec::new();
                for p in 0..4 {
                    let c = cfds_order(h, w, p)?;
                    let radii: Vec<usize> = c.perm.iter().map(|&i| ring_radius(h, w, i)).collect();
                    if radii.windows(2).any(|r| r[1] < r[0]) {
                        failures.push(format!("cfds {h}x{w} path {p} radius"));
                    }
                    orders.push(c);
                    orders.push(raster_order(h, w, p)?);
                }
                for window in [2, 4] {
                    if h % window != 0 || w % window != 0 {
                        continue;
                    }
                    for v in 0..4 {
                        let o = local_order_variant(h, w, window, v)?;
                        if !window_contained(&o, window) {
                            failures.push(format!("local {h}x{w} window {window} variant {v} containment"));
                        }
                        orders.push(o);
                    }
                }
                for o in &orders {
                    checked += 1;
                    if !o.is_bijection() {
                        failures.push(format!("{:?} {h}x{w} path {} bijection", o.kind, o.path_id));
                    }
                    if !serialize_round_trips(o, &mut rng)? {
                        failures.push(format!("{:?} {h}x{w} path {} round trip", o.kind, o.path_id));
                    }
                }
            }
        }
        Ok(Outcome::new(
            failures.is_empty(),
            format!("{checked} orders, {} failures {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
        ))
    })
}

pub fn criterion_ssm() -> CriterionReport {
    timed(4, "SSM kernel", 30, || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lens = [1, 2, 7, 64, 4096];
        let mut scan_err = 0.0f64;
        for case in 0..1000 {
            let len = lens[case % lens.len()];
            let state = rng.random_range(1..=8);
            let steps = oracle::random_steps(len, state, &mut rng);
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let seq = scan_sequential(&x, &steps)?;
            let par = scan_parallel(&x, &steps)?;
            for (a, b) in seq.iter().zip(&par) {
                scan_err = scan_err.max((a - b).abs());
            }
        }

        let mut spot_err = 0.0f64;
        for b in [1.0, -2.5, 0.125, 3.0] {
            let (a_bar, b_bar) = discretize(&[-1.0], &[b], std::f64::consts::LN_2)?;
            spot_err = spot_err.max((a_bar[0] - 0.5).abs()).max((b_bar[0] - 0.5 * b).abs());
        }

        let mut causal = true;
        for _ in 0..20 {
            let (d, len) = (rng.random_range(1..=4), rng.random_range(2..=48));
            let p = SsmParams::init(rng.random_range(1..=6), d, &mut rng);
            let seq = Tensor::from_fn(&[1, d, len], |_| rng.random_range(-1.0..1.0));
            let t = rng.random_range(1..len);
            let mut perturbed = seq.clone();
            for ch in 0..d {
                for s in t..len {
                    perturbed.data_mut()[ch * len + s] += rng.random_range(-5.0..5.0);
                }
            }
            let (y0, y1) = (selective_ssm(&seq, &p)?, selective_ssm(&perturbed, &p)?);
            for ch in 0..d {
                for s in 0..t {
                    let i = ch * len + s;
                    causal &= y0.data()[i].to_bits() == y1.data()[i].to_bits();
                }
            }
        }
        Ok(Outcome::new(
            scan_err < 1e-10 && spot_err <= 1e-15 && causal,
            format!("parallel vs sequential {scan_err:.1e}, discretize {spot_err:.1e}, causal {causal}"),
        ))
    })
}

pub fn criterion_ddcfm() -> CriterionReport {
    timed(5, "DDCFM gate contract", 5, || {
        let cfg = GateConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cardinality = true;
        let mut passthrough = true;
        for c in 2..=64usize {
            let k = 1.max((0.1 * c as f64).floor() as usize);
            let omega: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let imp = importance_threshold(&omega, &cfg);
            cardinality &= cfg.gate_count(c) == k && imp.gated.len() == k;

            let a = Tensor::from_fn(&[1, c, 3, 3], |_| rng.random_range(-1.0..1.0));
            let b = Tensor::from_fn(&[1, c, 3, 3], |_| rng.random_range(-1.0..1.0));
            let out = cross_enhance(&a, &b, &omega, &cfg)?;
            let mask = imp.mask();
            for ch in (0..c).filter(|&ch| !mask[ch]) {
                passthrough &= out.plane(0, ch).iter().zip(a.plane(0, ch)).all(|(x, y)| x.to_bits() == y.to_bits());
            }
        }
        let mut oracle_err = 0.0f64;
        for i in 0..100 {
            let c = rng.random_range(1..=16);
            let (bsz, h, w) = (rng.random_range(1..=2), rng.random_range(1..=6), rng.random_range(1..=6));
            let gate = GateConfig {
                use_abs: i % 2 == 1,
                normalized_features: i % 4 >= 2,
                ..cfg.clone()
            };
            let state = oracle::random_ddcfm_state(c, &mut rng);
            let a = Tensor::from_fn(&[bsz, c, h, w], |_| rng.random_range(-1.0..1.0));
            let b = Tensor::from_fn(&[bsz, c, h, w], |_| rng.random_range(-1.0..1.0));
            let fast = ddcfm_fuse(&a, &b, &state, &gate)?;
            let slow = oracle::ddcfm_reference(&a, &b, &state, &gate);
            oracle_err = oracle_err.max(fast.max_abs_diff(&slow)?);
        }
        Ok(Outcome::new(
            cardinality && passthrough && oracle_err <= 1e-12,
            format!("cardinality {cardinality}, pass-through {passthrough}, oracle {oracle_err:.1e}"),
        ))
    })
}

/// A random valid configuration with `C <= 8` and `H, W <= 32`.
pub fn random_config(rng: &mut impl Rng) -> NetConfig {
    let sizes = [8, 16, 32];
    let (height, width) = (sizes[rng.random_range(0..2)], sizes[rng.random_range(0..3)]);
    let image_scan = if rng.random_bool(0.75) { ScanKind::Local } else { ScanKind::Raster };
    let freq_scan = if rng.random_bool(0.75) { ScanKind::Cfds } else { ScanKind::Raster };
    let cfds_paths = match freq_scan {
        ScanKind::Cfds => [1, 4, 8][rng.random_range(0..3)],
        _ => [1, 2, 4][rng.random_range(0..3)],
    };
    NetConfig {
        channels: rng.random_range(1..=8),
        rmg_count: rng.random_range(1..=2),
        blocks_per_rmg: rng.random_range(1..=2),
        ssm_state: rng.random_range(1..=8),
        local_window: [2, 4][rng.random_range(0..2)],
        cfds_paths,
        image_paths: [1, 2, 4][rng.random_range(0..3)],
        image_scan,
        freq_scan,
        height,
        width,
        ..NetConfig::default()
    }
}

fn bit_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn criterion_network() -> CriterionReport {
    timed(6, "network skeleton", 60, || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (mut shapes, mut identity, mut residue) = (true, true, 0.0f64);
        for i in 0..20 {
            let cfg = random_config(&mut rng);
            let (net, _) = init_network(&cfg, i)?;
            let img = Tensor::from_fn(&[1, 1, cfg.height, cfg.width], |_| rng.random_range(0.0..1.0));
            let out = forward(&img, &net)?;
            shapes &= out.shape() == img.shape() && out.is_finite();
            let f_s = Tensor::from_fn(&[1, cfg.channels, cfg.height, cfg.width], |_| rng.random_range(-1.0..1.0));
            residue = residue.max(frequency_branch(&f_s, &net)?.residue);
            let mut skeleton = net.clone();
            skeleton.zero_non_residual();
            identity &= bit_equal(&forward(&img, &skeleton)?, &img);
        }

        let cfg = NetConfig {
            channels: 8,
            cfds_paths: 8,
            ..NetConfig::default()
        };
        let (net_a, _) = init_network(&cfg, 66)?;
        let (net_b, _) = init_network(&cfg, 66)?;
        let img = Tensor::from_fn(&[2, 1, 32, 32], |_| rng.random_range(0.0..1.0));
        let run1 = forward(&img, &net_a)?;
        let run2 = forward(&img, &net_b)?;
        let t1 = with_threads(1, || forward(&img, &net_a))??;
        let t4 = with_threads(4, || forward(&img, &net_a))??;
        let deterministic = bit_equal(&run1, &run2) && bit_equal(&run1, &t1) && bit_equal(&run1, &t4);
        Ok(Outcome::new(
            shapes && identity && deterministic && residue < 1e-6,
            format!("shapes {shapes}, identity {identity}, deterministic {deterministic}, residue {residue:.1e}"),
        ))
    })
}

pub fn criterion_loss_gradient() -> CriterionReport {
    timed(7, "loss gradient", 10, || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b) = (DEFAULT_WEIGHT, DEFAULT_WEIGHT);
        let mut grad_err = 0.0f64;
        let mut composition = true;
        let mut wrap_err = 0.0f64;
        for _ in 0..10 {
            let (out, gt) = oracle::kink_free_pair(8, 8, &mut rng);
            let g = hybrid_loss_grad(&out, &gt, a, b)?;
            let fd = oracle::central_difference(&out, 1e-6, |x| hybrid_loss(x, &gt, a, b).unwrap().total);
            for (x, y) in g.data().iter().zip(fd.data()) {
                grad_err = grad_err.max((x - y).abs() / x.abs().max(y.abs()).max(1e-8));
            }
            let l = hybrid_loss(&out, &gt, a, b)?;
            composition &= l.total.to_bits() == (l.image_l1 + a * l.phase_l1 + b * l.amp_l1).to_bits();

            let p: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
            let q: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
            let turns: Vec<f64> = p
                .iter()
                .map(|v| v + 2.0 * std::f64::consts::PI * rng.random_range(-3i32..=3) as f64)
                .collect();
            wrap_err = wrap_err.max((phase_l1(&turns, &q) - phase_l1(&p, &q)).abs());
        }
        Ok(Outcome::new(
            grad_err < 1e-4 && composition && wrap_err <= 1e-12,
            format!("gradient rel {grad_err:.1e}, composition {composition}, wrap {wrap_err:.1e}"),
        ))
    })
}

/// Zero-filled PSNR, optimized PSNR, starting loss and final loss of the
/// toy reconstruction.
pub fn toy_scores() -> Result<(f64, f64, f64, f64)> {
    let gt = make_phantom(TOY_SIZE, TOY_SIZE, PhantomKind::SheppLogan, 0)?;
    let zf = undersample(&gt, &make_cartesian_mask(TOY_SIZE, TOY_SIZE, 2, 0)?, &NoiseSpec::NONE)?;
    let run = toy_optimize(&zf, &gt, TOY_STEPS, TOY_LR, DEFAULT_WEIGHT, DEFAULT_WEIGHT)?;
    Ok((
        psnr(&zf, &gt, DEFAULT_DATA_RANGE)?,
        psnr(&run.estimate, &gt, DEFAULT_DATA_RANGE)?,
        run.trace[0].total,
        run.trace[TOY_STEPS].total,
    ))
}

pub fn criterion_toy_optimization() -> CriterionReport {
    timed(8, "toy optimization", 60, || {
        let (p_zf, p_out, l0, l1) = toy_scores()?;
        Ok(Outcome::new(
            l1 < 0.5 * l0 && p_out > p_zf,
            format!("loss {l0:.4} -> {l1:.4}, PSNR {p_zf:.2} -> {p_out:.2} dB"),
        ))
    })
}

pub fn criterion_zf_ordering() -> CriterionReport {
    timed(9, "zero-filled metric ordering", 10, || {
        let mut hits = 0;
        let (mut sum_r, mut sum_c) = (0.0, 0.0);
        for (seed, img) in phantom_suite()? {
            let (h, w) = img.dims2("criterion_zf_ordering")?;
            let radial = undersample(&img, &make_radial_mask(h, w, 2, seed)?, &NoiseSpec::NONE)?;
            let cart = undersample(&img, &make_cartesian_mask(h, w, 2, seed)?, &NoiseSpec::NONE)?;
            let (pr, pc) = (psnr(&radial, &img, DEFAULT_DATA_RANGE)?, psnr(&cart, &img, DEFAULT_DATA_RANGE)?);
            sum_r += pr;
            sum_c += pc;
            if pr > pc {
                hits += 1;
            }
        }
        Ok(Outcome::new(
            hits >= 8,
            format!("radial ahead on {hits}/10, mean {:.2} vs {:.2} dB", sum_r / 10.0, sum_c / 10.0),
        ))
    })
}

pub fn run_criterion(id: usize) -> Option<CriterionReport> {
    Some(match id {
        1 => criterion_swap_ordering(),
        2 => criterion_fourier(),
        3 => criterion_scan_orders(),
        4 => criterion_ssm(),
        5 => criterion_ddcfm(),
        6 => criterion_network(),
        7 => criterion_loss_gradient(),
        8 => criterion_toy_optimization(),
        9 => criterion_zf_ordering(),
        _ => return None,
    })
}

pub fn run_all() -> Vec<CriterionReport> {
    (1..=CRITERIA).filter_map(run_criterion).collect()
}
