//! Flat `key = value` run configuration with `#` comments.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pasm_core::kspace::{MaskPattern, NoiseSpec, PhantomKind};
use pasm_core::net::NetConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub net: NetConfig,
    pub mask_pattern: MaskPattern,
    pub acceleration: u8,
    pub mask_seed: u64,
    pub noise: NoiseSpec,
    pub phantom: PhantomKind,
    pub phantom_seed: u64,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub steps: usize,
    pub lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            mask_pattern: MaskPattern::Cartesian,
            acceleration: 4,
            mask_seed: 0,
            noise: NoiseSpec::NONE,
            phantom: PhantomKind::SheppLogan,
            phantom_seed: 0,
            seed: 0,
            alpha: pasm_core::loss::DEFAULT_WEIGHT,
            beta: pasm_core::loss::DEFAULT_WEIGHT,
            steps: pasm_core::verify::TOY_STEPS,
            lr: pasm_core::verify::TOY_LR,
        }
    }
}

/// A configuration problem, located by file and (when known) line.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.path.display(), self.msg),
            None => write!(f, "{}: {}", self.path.display(), self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| format!("key `{key}`: invalid value `{value}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("key `{key}`: expected true or false, got `{value}`")),
    }
}

impl RunConfig {
    #[cfg(test)]
    pub const KEYS: &'static [&'static str] = &[
        "channels",
        "rmg_count",
        "blocks_per_rmg",
        "ssm_state",
        "local_window",
        "cfds_paths",
        "image_paths",
        "image_scan",
        "freq_scan",
        "height",
        "width",
        "amplitude_map",
        "gate.fraction",
        "gate.use_abs",
        "gate.min_gated",
        "gate.normalized_features",
        "mask.pattern",
        "mask.accel",
        "mask.seed",
        "noise.sigma",
        "noise.seed",
        "phantom.kind",
        "phantom.seed",
        "seed",
        "loss.alpha",
        "loss.beta",
        "train.steps",
        "train.lr",
    ];

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let n = &mut self.net;
        match key {
            "channels" => n.channels = parse(key, value)?,
            "rmg_count" => n.rmg_count = parse(key, value)?,
            "blocks_per_rmg" => n.blocks_per_rmg = parse(key, value)?,
            "ssm_state" => n.ssm_state = parse(key, value)?,
            "local_window" => n.local_window = parse(key, value)?,
            "cfds_paths" => n.cfds_paths = parse(key, value)?,
            "image_paths" => n.image_paths = parse(key, value)?,
            "image_scan" => n.image_scan = parse(key, value)?,
            "freq_scan" => n.freq_scan = parse(key, value)?,
            "height" => n.height = parse(key, value)?,
            "width" => n.width = parse(key, value)?,
            "amplitude_map" => n.amplitude_map = parse(key, value)?,
            "gate.fraction" => n.gate.fraction = parse(key, value)?,
            "gate.use_abs" => n.gate.use_abs = parse_bool(key, value)?,
            "gate.min_gated" => n.gate.min_gated = parse(key, value)?,
            "gate.normalized_features" => n.gate.normalized_features = parse_bool(key, value)?,
            "mask.pattern" => self.mask_pattern = parse(key, value)?,
            "mask.accel" => self.acceleration = parse(key, value)?,
            "mask.seed" => self.mask_seed = parse(key, value)?,
            "noise.sigma" => self.noise.sigma = parse(key, value)?,
            "noise.seed" => self.noise.seed = parse(key, value)?,
            "phantom.kind" => self.phantom = parse(key, value)?,
            "phantom.seed" => self.phantom_seed = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "loss.alpha" => self.alpha = parse(key, value)?,
            "loss.beta" => self.beta = parse(key, value)?,
            "train.steps" => self.steps = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn parse_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let err = |line, msg| ConfigError {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(Some(i + 1), format!("expected `key = value`, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(Some(i + 1), format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(|m| err(Some(i + 1), m))?;
        }
        cfg.validate().map_err(|m| err(None, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            msg: e.to_string(),
        })?;
        Self::parse_str(&text, path)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.net.validate().map_err(|e| e.to_string())?;
        self.noise.validate().map_err(|e| e.to_string())?;
        if self.acceleration != 2 && self.acceleration != 4 {
            return Err(format!("mask.accel must be 2 or 4, got {}", self.acceleration));
        }
        if self.mask_pattern == MaskPattern::Full {
            return Err("mask.pattern must be cartesian or radial".into());
        }
        if self.net.height < 16 || self.net.width < 16 {
            return Err("height and width must be >= 16 for phantom runs".into());
        }
        if self.steps == 0 || !(self.lr > 0.0) {
            return Err("train.steps must be >= 1 and train.lr > 0".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err("loss.alpha and loss.beta must be >= 0".into());
        }
        Ok(())
    }
}
