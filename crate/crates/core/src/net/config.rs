use crate::ddcfm::GateConfig;
use crate::error::{Error, Result};
use crate::scan::ScanKind;

/// How the fused amplitude features are made nonnegative before the
/// spectrum is recomposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AmplitudeMap {
    #[default]
    Relu,
    Softplus,
    Abs,
}

impl AmplitudeMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            AmplitudeMap::Relu => x.max(0.0),
            AmplitudeMap::Softplus => crate::numerics::softplus(x),
            AmplitudeMap::Abs => x.abs(),
        }
    }
}

impl std::str::FromStr for AmplitudeMap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(AmplitudeMap::Relu),
            "softplus" => Ok(AmplitudeMap::Softplus),
            "abs" => Ok(AmplitudeMap::Abs),
            other => Err(format!("unknown amplitude map `{other}` (relu|softplus|abs)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub channels: usize,
    /// Residue Mamba groups per branch.
    pub rmg_count: usize,
    pub blocks_per_rmg: usize,
    pub ssm_state: usize,
    pub local_window: usize,
    /// Frequency-branch scan directions: 1, 4 or 8.
    pub cfds_paths: usize,
    /// Image-branch scan directions: 1, 2 or 4.
    pub image_paths: usize,
    /// `Local` or `Raster` (ablation).
    pub image_scan: ScanKind,
    /// `Cfds` or `Raster` (ablation).
    pub freq_scan: ScanKind,
    pub gate: GateConfig,
    pub height: usize,
    pub width: usize,
    pub shallow_kernel: usize,
    pub rmg_kernel: usize,
    pub head_kernel: usize,
    pub amplitude_map: AmplitudeMap,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            rmg_count: 1,
            blocks_per_rmg: 2,
            ssm_state: 8,
            local_window: 4,
            cfds_paths: 4,
            image_paths: 4,
            image_scan: ScanKind::Local,
            freq_scan: ScanKind::Cfds,
            gate: GateConfig::default(),
            height: 32,
            width: 32,
            shallow_kernel: 3,
            rmg_kernel: 3,
            head_kernel: 3,
            amplitude_map: AmplitudeMap::Relu,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::param("NetConfig", msg));
        if self.channels == 0 || self.rmg_count == 0 || self.blocks_per_rmg == 0 || self.ssm_state == 0 {
            return bad("channels, rmg_count, blocks_per_rmg and ssm_state must be >= 1".into());
        }
        if self.height < 2 || self.width < 2 || self.height % 2 != 0 || self.width % 2 != 0 {
            return bad(format!("image size {}x{} must be even and >= 2", self.height, self.width));
        }
        if self.image_scan == ScanKind::Local
            && (self.local_window == 0 || self.height % self.local_window != 0 || self.width % self.local_window != 0)
        {
            return bad(format!(
                "local window {} must divide {}x{}",
                self.local_window, self.height, self.width
            ));
        }
        match self.freq_scan {
            ScanKind::Cfds if ![1, 4, 8].contains(&self.cfds_paths) => {
                return bad(format!("cfds_paths must be 1, 4 or 8, got {}", self.cfds_paths))
            }
            ScanKind::Raster if ![1, 2, 4].contains(&self.cfds_paths) => {
                return bad(format!("raster frequency scan supports 1, 2 or 4 paths, got {}", self.cfds_paths))
            }
            ScanKind::Local => return bad("frequency branch scan must be cfds or raster".into()),
            _ => {}
        }
        if self.image_scan == ScanKind::Cfds {
            return bad("image branch scan must be local or raster".into());
        }
        if ![1, 2, 4].contains(&self.image_paths) {
            return bad(format!("image_paths must be 1, 2 or 4, got {}", self.image_paths));
        }
        for (name, k) in [
            ("shallow_kernel", self.shallow_kernel),
            ("rmg_kernel", self.rmg_kernel),
            ("head_kernel", self.head_kernel),
        ] {
            if k % 2 == 0 {
                return bad(format!("{name} must be odd, got {k}"));
            }
        }
        self.gate.validate()
    }
}
