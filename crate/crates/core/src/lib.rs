//! Phase/amplitude-decoupled state-space reconstruction toolkit for
//! undersampled MRI: Fourier utilities, k-space simulation, scan orders,
//! selective scans, dual-domain fusion, the forward network, losses and
//! metrics.

pub mod ddcfm;
pub mod error;
pub mod fourier;
pub mod io;
pub mod kspace;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod numerics;
pub mod oracle;
pub mod parallel;
pub mod scan;
pub mod ssm;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use fourier::{AmpPhase, ComplexGrid};
pub use kspace::{MaskPattern, NoiseSpec, PhantomKind, SamplingMask};
pub use net::{NetConfig, NetworkState};
pub use numerics::{ConvSpec, NormParams};
pub use scan::{ScanKind, ScanOrder};
pub use ssm::SsmParams;
pub use tensor::Tensor;
pub use ddcfm::{DdcfmState, GateConfig};
