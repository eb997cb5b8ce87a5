//! Scenario files (TOML). Angles are in degrees, frequencies in MHz, times
//! in ns; conversion to model units happens here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HeraldError, Result};
use crate::montecarlo::{EnsembleConfig, NoiseParams};
use crate::nv::NvLinkParams;
use crate::protocol::DetectionWindow;

fn config_err(field: &str, reason: impl Into<String>) -> HeraldError {
    HeraldError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub link: LinkConfig,
    pub window: WindowConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    pub pulse: Option<PulseConfig>,
    pub sweep: Option<SweepConfig>,
    pub optimize: Option<OptimizeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub tau: f64,
    pub alpha: [f64; 2],
    pub eta: [f64; 2],
    #[serde(default)]
    pub p_de: f64,
    #[serde(default = "full_rotation")]
    pub theta_deg: [f64; 2],
    #[serde(default)]
    pub phase_setpoint_deg: f64,
    #[serde(default)]
    pub target_phase_deg: f64,
    #[serde(default)]
    pub pol_mismatch_deg: f64,
    #[serde(default)]
    pub detuning_mhz: [f64; 2],
}

fn full_rotation() -> [f64; 2] {
    [180.0; 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Relative to the excitation pulse peak.
    pub start: f64,
    pub duration: f64,
    #[serde(default = "one")]
    pub bin_width: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub rate_hz: f64,
    #[serde(default)]
    pub sigma_phase_deg: f64,
    #[serde(default)]
    pub freq_fwhm_mhz: f64,
    #[serde(default)]
    pub freq_offset_mhz: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    #[serde(default)]
    pub vartheta_deg: [f64; 2],
    #[serde(default)]
    pub path_delay_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    100_000
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Two-column (t ns, intensity) CSV, relative to the config file.
    pub file: Option<PathBuf>,
    /// Synthetic Gaussian instead of a file.
    pub gaussian_fwhm_ns: Option<f64>,
    #[serde(default = "theta_scan")]
    pub theta_deg: Vec<f64>,
}

fn theta_scan() -> Vec<f64> {
    (0..=18).map(|i| 10.0 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    VarthetaB,
    PhaseSetpoint,
    FreqOffset,
    FreqFwhm,
    Theta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::VarthetaB => "vartheta_b_deg",
            Self::PhaseSetpoint => "phase_setpoint_deg",
            Self::FreqOffset => "freq_offset_mhz",
            Self::FreqFwhm => "freq_fwhm_mhz",
            Self::Theta => "theta_deg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    #[serde(default)]
    pub values: Vec<f64>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub steps: Option<usize>,
    /// δφ setpoints for the θ axis, degrees.
    #[serde(default = "fig9_setpoints")]
    pub phase_setpoints_deg: Vec<f64>,
}

fn fig9_setpoints() -> Vec<f64> {
    vec![0.0, 90.0]
}

impl SweepConfig {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !self.values.is_empty() {
            return Ok(self.values.clone());
        }
        match (self.start, self.stop, self.steps) {
            (Some(a), Some(b), Some(n)) if n >= 2 => {
                Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
            }
            (Some(a), _, Some(1)) => Ok(vec![a]),
            _ => Err(config_err("sweep", "give `values` or `start`, `stop` and `steps`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeMode {
    Alphas,
    AlphaTheta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub mode: OptimizeMode,
    /// Defaults to the link's η.
    pub eta: Option<[f64; 2]>,
    #[serde(default)]
    pub p_click: Vec<f64>,
    #[serde(default)]
    pub target_fidelity: Vec<f64>,
    /// Pulse FWHM in units of τ.
    #[serde(default)]
    pub pulse_fwhm_tau: Vec<f64>,
}

/// SHA-256 of the canonical TOML serialization.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let mut root = toml::Table::new();
    if let Ok(v) = toml::Value::try_from(value) {
        root.insert("value".into(), v);
    }
    let canonical = toml::to_string(&root).unwrap_or_default();
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| text[s].lines().next().unwrap_or("").trim().to_string());
            config_err(&field.unwrap_or_else(|| "<root>".into()), e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a scenario and resolves file references against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(p) = cfg.pulse.as_mut() {
            if let Some(f) = p.file.as_mut() {
                if f.is_relative() {
                    *f = path.parent().unwrap_or(Path::new(".")).join(&*f);
                }
                if !f.exists() {
                    return Err(config_err("pulse.file", format!("{} does not exist", f.display())));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |field: &str, r: Result<()>| r.map_err(|e| config_err(field, e.to_string()));
        wrap("link", self.link_params().validate())?;
        wrap("noise", self.noise_params().validate())?;
        wrap("window", self.ensemble().validate())?;
        if self.montecarlo.samples == 0 {
            return Err(config_err("montecarlo.samples", "must be > 0"));
        }
        if let Some(p) = &self.pulse {
            if p.file.is_some() == p.gaussian_fwhm_ns.is_some() {
                return Err(config_err("pulse", "give exactly one of `file` and `gaussian_fwhm_ns`"));
            }
            if p.theta_deg.is_empty() {
                return Err(config_err("pulse.theta_deg", "empty"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.points()?.is_empty() {
                return Err(config_err("sweep.values", "empty"));
            }
        }
        if let Some(o) = &self.optimize {
            let empty = match o.mode {
                OptimizeMode::Alphas => o.p_click.is_empty(),
                OptimizeMode::AlphaTheta => o.target_fidelity.is_empty() || o.pulse_fwhm_tau.is_empty(),
            };
            if empty {
                return Err(config_err("optimize", "no points to optimize"));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        content_hash(self)
    }

    pub fn link_params(&self) -> NvLinkParams {
        let l = &self.link;
        let mut p = NvLinkParams::new(l.alpha, l.eta);
        p.p_de = l.p_de;
        p.p_d = self.noise.rate_hz * self.window.duration * 1e-9;
        p.theta = l.theta_deg.map(f64::to_radians);
        p.phase_setpoint = l.phase_setpoint_deg.to_radians();
        p.target_phase = l.target_phase_deg.to_radians();
        p.pol_overlap = l.pol_mismatch_deg.to_radians().cos();
        p.detuning = l.detuning_mhz.map(|f| std::f64::consts::TAU * f * 1e-3);
        p
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams {
            p_d: self.noise.rate_hz * self.window.duration * 1e-9,
            sigma_phase: self.noise.sigma_phase_deg.to_radians(),
            freq_fwhm: self.noise.freq_fwhm_mhz,
            freq_offset: self.noise.freq_offset_mhz,
        }
    }

    pub fn detection_window(&self) -> DetectionWindow {
        DetectionWindow::new(self.window.start, self.window.duration)
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        let mut c = EnsembleConfig::new(
            self.link.tau,
            self.detection_window(),
            self.montecarlo.samples,
            self.montecarlo.seed,
        );
        c.bin_width = self.window.bin_width;
        c.vartheta = self.phase.vartheta_deg.map(f64::to_radians);
        c.path_delay = self.phase.path_delay_ns;
        c
    }
}
