//! Experiment recipes: one JSON document per run, unknown keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ModelKind, Window};
use crate::dynamics::{DecoherenceParams, DriveParams, DynamicsError};
use crate::measurement::{EsrSweepParams, MeasurementError, ReadoutModel};
use crate::spin::{SpinError, SpinSystemParams};

/// Grids longer than this are almost certainly a typo in `step`.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("sweep: {0}")]
    Sweep(String),
    #[error("experiment `{0}` needs a `sweep` block")]
    MissingSweep(&'static str),
    #[error("variant `{label}`: {message}")]
    Variant { label: String, message: String },
    #[error("analyze: {0}")]
    Analyze(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Drive(#[from] DynamicsError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rabi,
    Ramsey,
    Echo,
    Esr,
    Levels,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Rabi => "rabi",
            ExperimentKind::Ramsey => "ramsey",
            ExperimentKind::Echo => "echo",
            ExperimentKind::Esr => "esr",
            ExperimentKind::Levels => "levels",
        }
    }
}

/// Inclusive uniform grid; point `i` is `start + i * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err(ConfigError::Sweep("start, stop and step must be finite".into()));
        }
        if self.step <= 0.0 {
            return Err(ConfigError::Sweep(format!("step must be > 0, got {}", self.step)));
        }
        if self.stop < self.start {
            return Err(ConfigError::Sweep(format!(
                "stop ({}) is below start ({})",
                self.stop, self.start
            )));
        }
        if self.start < 0.0 {
            return Err(ConfigError::Sweep(format!("start must be >= 0, got {}", self.start)));
        }
        if self.len() > MAX_GRID_POINTS {
            return Err(ConfigError::Sweep(format!(
                "{} points exceeds the limit of {MAX_GRID_POINTS}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// How the π/2 and π pulses of Ramsey and echo sequences are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    /// Instantaneous ideal rotations.
    #[default]
    Hard,
    /// Resonant pulses of finite length at the drive's `f0`.
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoConfig {
    /// Fixed first free period. Absent: symmetric echo with `tau = tau'`,
    /// abscissa is the total free time `2 tau`. Present: abscissa is `tau'`.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File stem; defaults to the experiment name.
    pub prefix: Option<String>,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            prefix: None,
            svg: false,
        }
    }
}

/// One extra trace in a multi-trace recipe; fields override the base drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default)]
    pub f0: Option<f64>,
    #[serde(default)]
    pub delta_f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzeMode {
    Fft,
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub mode: AnalyzeMode,
    pub window: Window,
    pub zero_pad_factor: usize,
    /// Peaks are reported above this fraction of the spectrum maximum.
    pub peak_threshold: f64,
    /// Defaults by experiment: rabi -> triple_nutation, ramsey ->
    /// ramsey_fringes, echo -> echo_envelope, esr -> triple_lorentzian.
    pub model: Option<ModelKind>,
    /// Overrides of the model's default free/fixed flags.
    pub free: BTreeMap<String, bool>,
    /// Initial values; parameters not listed come from the data.
    pub init: BTreeMap<String, f64>,
    pub bounds: BTreeMap<String, [f64; 2]>,
    /// Starting detunings tried for triple_nutation fits; the lowest SSE
    /// wins. Empty: a single start at `delta_f = 0`.
    pub multistart_delta: Vec<f64>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            mode: AnalyzeMode::Fft,
            window: Window::Hann,
            zero_pad_factor: 8,
            peak_threshold: 0.3,
            model: None,
            free: BTreeMap::new(),
            init: BTreeMap::new(),
            bounds: BTreeMap::new(),
            multistart_delta: Vec::new(),
        }
    }
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.zero_pad_factor < 1 {
            return Err(ConfigError::Analyze("zero_pad_factor must be >= 1".into()));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return Err(ConfigError::Analyze(format!(
                "peak_threshold must lie in (0, 1), got {}",
                self.peak_threshold
            )));
        }
        if self.multistart_delta.iter().any(|d| !d.is_finite()) {
            return Err(ConfigError::Analyze("multistart_delta entries must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub spin: SpinSystemParams,
    /// Chooses `spin.b_theta` so the m_s = +1 and -1 triplet centers are
    /// this many MHz apart at `spin.b_mag`.
    #[serde(default)]
    pub match_branch_splitting: Option<f64>,
    /// Takes `drive.alpha_n` from the computed 0 -> +1 triplet splitting.
    #[serde(default)]
    pub alpha_from_spin: bool,
    #[serde(default)]
    pub drive: DriveParams,
    #[serde(default)]
    pub decoherence: DecoherenceParams,
    #[serde(default)]
    pub readout: ReadoutModel,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub esr: EsrSweepParams,
    #[serde(default)]
    pub echo: EchoConfig,
    #[serde(default)]
    pub pulses: PulseMode,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub analyze: Option<AnalyzeConfig>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            spin: SpinSystemParams::default(),
            match_branch_splitting: None,
            alpha_from_spin: false,
            drive: DriveParams::default(),
            decoherence: DecoherenceParams::none(),
            readout: ReadoutModel::default(),
            sweep: None,
            esr: EsrSweepParams::default(),
            echo: EchoConfig::default(),
            pulses: PulseMode::Hard,
            variants: Vec::new(),
            seed: 0,
            noiseless: false,
            output: OutputConfig::default(),
            analyze: None,
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn prefix(&self) -> String {
        self.output
            .prefix
            .clone()
            .unwrap_or_else(|| self.experiment.name().to_string())
    }

    /// Checks every nested invariant and applies the derived settings
    /// (`match_branch_splitting`, `alpha_from_spin`).
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        self.spin.validate()?;
        if let Some(target) = self.match_branch_splitting {
            self.spin = self.spin.with_branch_splitting(target)?;
        }
        if self.alpha_from_spin {
            self.drive = self.drive.with_spin_splitting(&self.spin)?;
        }
        self.drive.validate()?;
        self.decoherence.validate()?;
        self.readout.validate()?;
        match self.experiment {
            ExperimentKind::Rabi | ExperimentKind::Ramsey | ExperimentKind::Echo => {
                self.sweep
                    .as_ref()
                    .ok_or(ConfigError::MissingSweep(self.experiment.name()))?
                    .validate()?;
            }
            ExperimentKind::Esr => self.esr.validate()?,
            ExperimentKind::Levels => {}
        }
        if let Some(tau) = self.echo.tau {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(ConfigError::Sweep(format!("echo.tau must be >= 0, got {tau}")));
            }
        }
        let mut labels = std::collections::HashSet::new();
        for v in &self.variants {
            let bad = |message: String| ConfigError::Variant {
                label: v.label.clone(),
                message,
            };
            if v.label.is_empty()
                || !v.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
            {
                return Err(bad("label must be non-empty [A-Za-z0-9_.-]".into()));
            }
            if !labels.insert(v.label.clone()) {
                return Err(bad("duplicate label".into()));
            }
            self.drive_for(v).validate().map_err(|e| bad(e.to_string()))?;
        }
        if let Some(a) = &self.analyze {
            a.validate()?;
        }
        Ok(self)
    }

    pub fn drive_for(&self, variant: &Variant) -> DriveParams {
        DriveParams {
            f0: variant.f0.unwrap_or(self.drive.f0),
            delta_f: variant.delta_f.unwrap_or(self.drive.delta_f),
            ..self.drive
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_json(text, Path::new("test.json"))
    }

    #[test]
    fn default_rabi_grid_has_141_points() {
        let g = SweepGrid { start: 0.0, stop: 3.5, step: 0.025 };
        assert_eq!(g.len(), 141);
        assert_eq!(g.points()[140], 3.5);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(r#"{"experiment": "levels"}"#).unwrap().resolve().unwrap();
        assert_eq!(c.spin, SpinSystemParams::default());
        assert_eq!(c.prefix(), "levels");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"experiment": "levels", "colour": 1}"#).is_err());
        assert!(parse(r#"{"experiment": "levels", "spin": {"dd": 1}}"#).is_err());
        assert!(parse(r#"{"experiment": "rabi", "sweep": {"start": 0, "stop": 1, "step": 0.1, "n": 3}}"#).is_err());
        assert!(parse(r#"{"experiment": "tomography"}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected_on_resolve() {
        let missing = parse(r#"{"experiment": "rabi"}"#).unwrap().resolve();
        assert!(matches!(missing, Err(ConfigError::MissingSweep("rabi"))));
        let zero_step = parse(r#"{"experiment": "rabi", "sweep": {"start": 0, "stop": 1, "step": 0}}"#)
            .unwrap()
            .resolve();
        assert!(matches!(zero_step, Err(ConfigError::Sweep(_))));
        let bad_spin = parse(r#"{"experiment": "levels", "spin": {"d": -1}}"#).unwrap().resolve();
        assert!(matches!(bad_spin, Err(ConfigError::Spin(_))));
        let dup = parse(
            r#"{"experiment": "rabi", "sweep": {"start": 0, "stop": 1, "step": 0.1},
                "variants": [{"label": "a"}, {"label": "a"}]}"#,
        )
        .unwrap()
        .resolve();
        assert!(matches!(dup, Err(ConfigError::Variant { .. })));
    }

    #[test]
    fn null_decay_means_infinite() {
        let c = parse(r#"{"experiment": "ramsey", "decoherence": {"t2_star": null, "t0": 2.0}}"#).unwrap();
        assert!(c.decoherence.t2_star.is_infinite());
        assert_eq!(c.decoherence.t0, 2.0);
    }

    #[test]
    fn splitting_match_applied() {
        let c = parse(r#"{"experiment": "levels", "match_branch_splitting": 60.0}"#)
            .unwrap()
            .resolve()
            .unwrap();
        assert!(c.spin.b_theta > 1.0 && c.spin.b_theta < 1.5);
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = ExperimentConfig::new(ExperimentKind::Rabi);
        c.sweep = Some(SweepGrid { start: 0.0, stop: 3.5, step: 0.025 });
        c.analyze = Some(AnalyzeConfig::default());
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
    }
}
