mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pasm_core::kspace::{MaskPattern, PhantomKind};
use pasm_core::scan::ScanKind;

/// Phase/amplitude-decoupled state-space MRI reconstruction toolkit.
#[derive(Parser, Debug)]
#[command(name = "pasm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Image size written as `HxW`, e.g. `64x64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Size {
    pub h: usize,
    pub w: usize,
}

impl std::str::FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got `{s}`"))?;
        let dim = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension `{v}` in `{s}`"));
        Ok(Size { h: dim(h)?, w: dim(w)? })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic phantom image.
    Phantom {
        #[arg(long, default_value = "shepp_logan")]
        kind: PhantomKind,
        #[arg(long, default_value = "64x64")]
        size: Size,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a PGM preview.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Write a k-space sampling mask.
    GenMask {
        #[arg(long)]
        pattern: MaskPattern,
        #[arg(long)]
        accel: u8,
        #[arg(long)]
        size: Size,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Zero-filled reconstruction of an image through a mask.
    Undersample {
        #[arg(long)]
        img: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Write the magnitude of the complex zero-filled image instead of
        /// its real part.
        #[arg(long)]
        magnitude: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Combine the spectral amplitude of one image with the phase of another.
    SwapSpectrum {
        #[arg(long)]
        amp: PathBuf,
        #[arg(long)]
        phase: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Write a scan permutation.
    ScanOrder {
        #[arg(long)]
        kind: ScanKind,
        #[arg(long)]
        size: Size,
        /// Direction (cfds: 0-7, raster: 0-3, local: variant 0-3).
        #[arg(long, default_value_t = 0)]
        path: usize,
        /// Window side for local orders.
        #[arg(long, default_value_t = 4)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
        /// PGM whose brightness encodes sequence position.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Compare the scan kernels against their references and print deviations.
    SsmDemo {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Show gated channels and channel statistics of one fusion.
    DdcfmDemo {
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Undersample a phantom and run a seeded random network on it.
    ForwardDemo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Load parameters instead of initializing from the seed.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Save the parameters used.
        #[arg(long)]
        save_weights: Option<PathBuf>,
    },
    /// Compare two images: PSNR, SSIM and the hybrid loss.
    Evaluate {
        output: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = pasm_core::metrics::DEFAULT_DATA_RANGE)]
        data_range: f64,
    },
    /// Gradient descent on the pixels of a zero-filled image under the hybrid loss.
    ToyTrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the acceptance suite.
    Verify {
        /// Run a single criterion (1-9).
        #[arg(long)]
        criterion: Option<usize>,
    },
}

/// A verification check failed (exit 1). Every other error exits 2.
#[derive(Debug)]
pub struct VerifyFailed(pub String);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let threads = match pasm_core::parallel::threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pasm_core::parallel::with_threads(threads, || commands::run(cli.command));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) if e.is::<VerifyFailed>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
