use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use pasm_core::ddcfm::{enhance_pair, importance_threshold, GateConfig};
use pasm_core::io;
use pasm_core::kspace::{
    make_cartesian_mask, make_phantom, make_radial_mask, swap_spectrum, undersample, zero_filled_magnitude,
    MaskPattern, NoiseSpec, SamplingMask,
};
use pasm_core::loss::{hybrid_loss, toy_optimize};
use pasm_core::metrics::{psnr, ssim, DEFAULT_DATA_RANGE};
use pasm_core::net::{forward, init_network, NetworkState};
use pasm_core::oracle;
use pasm_core::scan::{cfds_order_extended, local_order_variant, raster_order, ScanKind};
use pasm_core::ssm::{scan_parallel, scan_sequential, selective_ssm_with, ScanMode, SsmParams};
use pasm_core::{verify, Tensor};

use crate::config::RunConfig;
use crate::{Command, Size, VerifyFailed};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Phantom { kind, size, seed, out, pgm } => {
            let img = make_phantom(size.h, size.w, kind, seed)?;
            io::write_tensor(&out, &img)?;
            write_preview(pgm.as_deref(), &img, 0.0, 1.0)
        }
        Command::GenMask { pattern, accel, size, seed, out, pgm } => {
            let mask = build_mask(pattern, size, accel, seed)?;
            io::write_mask(&out, &mask)?;
            print_json(&json!({
                "pattern": pattern.to_string(),
                "acceleration": accel,
                "sampled": mask.sampled(),
                "fraction": mask.sampled_fraction(),
            }));
            write_preview(pgm.as_deref(), &mask_image(&mask)?, 0.0, 1.0)
        }
        Command::Undersample { img, mask, sigma, noise_seed, magnitude, out, pgm } => {
            let image = read_image(&img)?;
            let mask = io::read_mask(&mask).with_context(|| format!("reading {}", mask.display()))?;
            let noise = NoiseSpec { sigma, seed: noise_seed };
            let zf = if magnitude {
                zero_filled_magnitude(&image, &mask, &noise)?
            } else {
                undersample(&image, &mask, &noise)?
            };
            io::write_tensor(&out, &zf)?;
            write_preview(pgm.as_deref(), &zf, 0.0, 1.0)
        }
        Command::SwapSpectrum { amp, phase, out, pgm } => {
            let swapped = swap_spectrum(&read_image(&amp)?, &read_image(&phase)?)?;
            io::write_tensor(&out, &swapped)?;
            write_preview(pgm.as_deref(), &swapped, 0.0, 1.0)
        }
        Command::ScanOrder { kind, size, path, window, out, pgm } => {
            let order = match kind {
                ScanKind::Cfds => cfds_order_extended(size.h, size.w, path)?,
                ScanKind::Raster => raster_order(size.h, size.w, path)?,
                ScanKind::Local => local_order_variant(size.h, size.w, window, path)?,
            };
            io::write_order(&out, &order)?;
            let last = (order.len().max(2) - 1) as f64;
            let mut img = Tensor::zeros(&[size.h, size.w]);
            for (t, &i) in order.perm.iter().enumerate() {
                img.data_mut()[i] = t as f64 / last;
            }
            write_preview(pgm.as_deref(), &img, 0.0, 1.0)
        }
        Command::SsmDemo { cases, seed } => ssm_demo(cases, seed),
        Command::DdcfmDemo { channels, size, seed } => ddcfm_demo(channels, size, seed),
        Command::ForwardDemo { config, out_dir, weights, save_weights } => {
            forward_demo(&load_config(config.as_deref())?, &out_dir, weights.as_deref(), save_weights.as_deref())
        }
        Command::Evaluate { output, reference, data_range } => evaluate(&output, &reference, data_range),
        Command::ToyTrain { config, out_dir } => toy_train(&load_config(config.as_deref())?, &out_dir),
        Command::Verify { criterion } => run_verify(criterion),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_json(v: &Value) {
    emit(&serde_json::to_string_pretty(v).expect("values are serializable"));
}

/// JSON number, or the string `"inf"`/`"-inf"`/`"nan"` for non-finite values.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn read_image(path: &Path) -> Result<Tensor> {
    let t = io::read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
    match t.rank() {
        2 => Ok(t),
        4 if t.shape()[0] == 1 && t.shape()[1] == 1 => {
            let (h, w) = (t.shape()[2], t.shape()[3]);
            Ok(t.reshape(&[h, w])?)
        }
        _ => bail!("{}: expected a 2D image, got shape {:?}", path.display(), t.shape()),
    }
}

fn write_preview(path: Option<&Path>, img: &Tensor, lo: f64, hi: f64) -> Result<()> {
    if let Some(p) = path {
        io::write_pgm(p, img, lo, hi)?;
    }
    Ok(())
}

fn build_mask(pattern: MaskPattern, size: Size, accel: u8, seed: u64) -> Result<SamplingMask> {
    Ok(match pattern {
        MaskPattern::Cartesian => make_cartesian_mask(size.h, size.w, accel, seed)?,
        MaskPattern::Radial => make_radial_mask(size.h, size.w, accel, seed)?,
        MaskPattern::Full => bail!("pattern must be cartesian or radial"),
    })
}

fn mask_image(mask: &SamplingMask) -> Result<Tensor> {
    Ok(Tensor::image(
        mask.height,
        mask.width,
        mask.grid.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?)
}

fn ssm_demo(cases: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut scan_dev, mut oracle_dev, mut mode_dev) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..cases {
        let len = [1, 2, 7, 64, 512][case % 5];
        let steps = oracle::random_steps(len, rng.random_range(1..=8), &mut rng);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (scan_sequential(&x, &steps)?, scan_parallel(&x, &steps)?);
        scan_dev = a.iter().zip(&b).fold(scan_dev, |m, (p, q)| m.max((p - q).abs()));

        let (d, l) = (rng.random_range(1..=4), rng.random_range(1..=24));
        let p = SsmParams::init(rng.random_range(1..=4), d, &mut rng);
        let seq = Tensor::from_fn(&[1, d, l], |_| rng.random_range(-1.0..1.0));
        let fast = selective_ssm_with(&seq, &p, ScanMode::Sequential)?;
        let par = selective_ssm_with(&seq, &p, ScanMode::Parallel)?;
        oracle_dev = oracle_dev.max(fast.max_abs_diff(&oracle::selective_ssm_reference(&seq, &p))?);
        mode_dev = mode_dev.max(fast.max_abs_diff(&par)?);
    }
    print_json(&json!({
        "cases": cases,
        "parallel_vs_sequential": scan_dev,
        "selective_vs_dense_reference": oracle_dev,
        "selective_parallel_vs_sequential": mode_dev,
    }));
    Ok(())
}

fn channel_stats(t: &Tensor) -> Vec<Value> {
    let (_, c, h, w) = t.dims4("channel_stats").expect("rank-4 features");
    (0..c)
        .map(|ch| {
            let v = t.plane(0, ch);
            let mean = v.iter().sum::<f64>() / (h * w) as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (h * w) as f64;
            json!({"mean": mean, "std": var.sqrt()})
        })
        .collect()
}

fn ddcfm_demo(channels: usize, size: usize, seed: u64) -> Result<()> {
    if channels == 0 || size == 0 {
        bail!("channels and size must be >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GateConfig::default();
    let state = oracle::random_ddcfm_state(channels, &mut rng);
    let shape = [1, channels, size, size];
    let a = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let b = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let (enh_a, enh_b) = enhance_pair(&a, &b, &state, &cfg)?;
    let fused = pasm_core::ddcfm::ddcfm_fuse(&a, &b, &state, &cfg)?;
    let reference = oracle::ddcfm_reference(&a, &b, &state, &cfg);
    let imp_a = importance_threshold(&state.norm_a.weight, &cfg);
    let imp_b = importance_threshold(&state.norm_b.weight, &cfg);
    print_json(&json!({
        "channels": channels,
        "gated_a": imp_a.gated,
        "gated_b": imp_b.gated,
        "threshold_a": imp_a.threshold,
        "threshold_b": imp_b.threshold,
        "before_a": channel_stats(&a),
        "after_a": channel_stats(&enh_a),
        "before_b": channel_stats(&b),
        "after_b": channel_stats(&enh_b),
        "fused_vs_reference": fused.max_abs_diff(&reference)?,
    }));
    Ok(())
}

/// Phantom, mask and zero-filled image described by `cfg`.
fn measurement(cfg: &RunConfig) -> Result<(Tensor, Tensor)> {
    let (h, w) = (cfg.net.height, cfg.net.width);
    let gt = make_phantom(h, w, cfg.phantom, cfg.phantom_seed)?;
    let mask = build_mask(cfg.mask_pattern, Size { h, w }, cfg.acceleration, cfg.mask_seed)?;
    let zf = undersample(&gt, &mask, &cfg.noise)?;
    Ok((gt, zf))
}

fn forward_demo(cfg: &RunConfig, out_dir: &Path, weights: Option<&Path>, save: Option<&Path>) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let (h, w) = (cfg.net.height, cfg.net.width);
    let (gt, zf) = measurement(cfg)?;
    let net = match weights {
        Some(p) => NetworkState::load(&cfg.net, p).with_context(|| format!("loading {}", p.display()))?,
        None => init_network(&cfg.net, cfg.seed)?.0,
    };
    if let Some(p) = save {
        net.save(p)?;
    }
    let out = forward(&zf.clone().reshape(&[1, 1, h, w])?, &net)?.reshape(&[h, w])?;
    let err = out.zip_map(&gt, |a, b| (a - b).abs())?;
    for (name, img, hi) in [
        ("input", &zf, 1.0),
        ("output", &out, 1.0),
        ("target", &gt, 1.0),
        ("error", &err, err.max_abs().max(1e-12)),
    ] {
        io::write_pgm(&out_dir.join(format!("{name}.pgm")), img, 0.0, hi)?;
        io::write_tensor(&out_dir.join(format!("{name}.pasm")), img)?;
    }
    let r = DEFAULT_DATA_RANGE;
    let metrics = json!({
        "psnr_zf": num(psnr(&zf, &gt, r)?),
        "psnr_out": num(psnr(&out, &gt, r)?),
        "ssim_zf": ssim(&zf, &gt, r)?,
        "ssim_out": ssim(&out, &gt, r)?,
        "param_count": net.param_count(),
    });
    fs::write(out_dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    print_json(&metrics);
    Ok(())
}

fn evaluate(output: &Path, reference: &Path, data_range: f64) -> Result<()> {
    let (x, gt) = (read_image(output)?, read_image(reference)?);
    let l = hybrid_loss(&x, &gt, pasm_core::loss::DEFAULT_WEIGHT, pasm_core::loss::DEFAULT_WEIGHT)?;
    print_json(&json!({
        "psnr": num(psnr(&x, &gt, data_range)?),
        "ssim": ssim(&x, &gt, data_range)?,
        "hybrid": {
            "image_l1": l.image_l1,
            "phase_l1": l.phase_l1,
            "amp_l1": l.amp_l1,
            "total": l.total,
        },
    }));
    Ok(())
}

fn toy_train(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let (gt, zf) = measurement(cfg)?;
    let run = toy_optimize(&zf, &gt, cfg.steps, cfg.lr, cfg.alpha, cfg.beta)?;
    let mut csv = String::from("step,image_l1,phase_l1,amp_l1,total\n");
    for (i, l) in run.trace.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}\n", l.image_l1, l.phase_l1, l.amp_l1, l.total));
    }
    fs::write(out_dir.join("trace.csv"), csv)?;
    for (name, img) in [("before", &zf), ("after", &run.estimate), ("target", &gt)] {
        io::write_pgm(&out_dir.join(format!("{name}.pgm")), img, 0.0, 1.0)?;
        io::write_tensor(&out_dir.join(format!("{name}.pasm")), img)?;
    }
    let r = DEFAULT_DATA_RANGE;
    print_json(&json!({
        "steps": cfg.steps,
        "loss_start": run.trace[0].total,
        "loss_end": run.trace[cfg.steps].total,
        "psnr_zf": num(psnr(&zf, &gt, r)?),
        "psnr_out": num(psnr(&run.estimate, &gt, r)?),
    }));
    Ok(())
}

fn run_verify(criterion: Option<usize>) -> Result<()> {
    let reports = match criterion {
        Some(id) => match verify::run_criterion(id) {
            Some(r) => vec![r],
            None => bail!("criterion must be 1-{}, got {id}", verify::CRITERIA),
        },
        None => verify::run_all(),
    };
    for r in &reports {
        emit(&r.to_string());
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if !failed.is_empty() {
        return Err(VerifyFailed(format!("criteria {}", failed.join(", "))).into());
    }
    Ok(())
}
