//! Photon-count readout, Poisson shot noise with cycle averaging, ESR sweep
//! synthesis, and the `Trace` container with its CSV/JSON serialization.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spin::{
    build_hamiltonian, diagonalize, transition_triplet, Branch, SpinError, SpinSystemParams,
};

/// Slack allowed on populations computed in floating point.
const POPULATION_SLACK: f64 = 1e-12;

pub const TRACE_CSV_HEADER: &str = "abscissa,signal,sigma";

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("population at index {index} is outside [0, 1]: {value}")]
    PopulationOutOfRange { index: usize, value: f64 },
    #[error("readout parameter `{name}` is invalid: {value}")]
    InvalidReadout { name: &'static str, value: f64 },
    #[error("ESR sweep parameter `{name}` is invalid: {value}")]
    InvalidSweep { name: &'static str, value: f64 },
    #[error("trace arrays differ in length: abscissa {abscissa}, signal {signal}, sigma {sigma}")]
    LengthMismatch {
        abscissa: usize,
        signal: usize,
        sigma: usize,
    },
    #[error("abscissa is not strictly increasing at index {index}")]
    NotIncreasing { index: usize },
    #[error("negative or non-finite value at index {index}")]
    InvalidValue { index: usize },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutModel {
    /// Mean detected photons per readout with the spin in m_s = 0.
    pub counts_bright: f64,
    /// Fractional fluorescence drop for m_s = ±1.
    pub contrast: f64,
    /// Repetitions averaged per point.
    pub cycles: u64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self {
            counts_bright: 0.02,
            contrast: 0.3,
            cycles: 100_000,
        }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<(), MeasurementError> {
        if !(self.counts_bright.is_finite() && self.counts_bright > 0.0) {
            return Err(MeasurementError::InvalidReadout {
                name: "counts_bright",
                value: self.counts_bright,
            });
        }
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(MeasurementError::InvalidReadout {
                name: "contrast",
                value: self.contrast,
            });
        }
        if self.cycles == 0 {
            return Err(MeasurementError::InvalidReadout {
                name: "cycles",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Mean photons per cycle for m_s = 0 population `p`.
    pub fn mean_counts(&self, p: f64) -> f64 {
        self.counts_bright * (1.0 - self.contrast * (1.0 - p))
    }
}

/// Generating metadata carried alongside a trace in its JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub kind: String,
    pub abscissa_unit: String,
    pub seed: Option<u64>,
    pub noiseless: bool,
    /// Every generating parameter, as given.
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub abscissa: Vec<f64>,
    pub signal: Vec<f64>,
    /// Per-point standard errors; all zero for noiseless traces.
    pub sigma: Vec<f64>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn new(
        abscissa: Vec<f64>,
        signal: Vec<f64>,
        sigma: Vec<f64>,
        meta: TraceMeta,
    ) -> Result<Self, MeasurementError> {
        let t = Self {
            abscissa,
            signal,
            sigma,
            meta,
        };
        t.validate()?;
        Ok(t)
    }

    /// Trace with zero uncertainties.
    pub fn exact(abscissa: Vec<f64>, signal: Vec<f64>) -> Result<Self, MeasurementError> {
        let n = abscissa.len();
        Self::new(abscissa, signal, vec![0.0; n], TraceMeta::default())
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        let (a, s, e) = (self.abscissa.len(), self.signal.len(), self.sigma.len());
        if a != s || a != e {
            return Err(MeasurementError::LengthMismatch {
                abscissa: a,
                signal: s,
                sigma: e,
            });
        }
        for i in 0..a {
            if !self.abscissa[i].is_finite() || !self.signal[i].is_finite() {
                return Err(MeasurementError::InvalidValue { index: i });
            }
            if !(self.sigma[i] >= 0.0 && self.sigma[i].is_finite()) {
                return Err(MeasurementError::InvalidValue { index: i });
            }
            if i > 0 && self.abscissa[i] <= self.abscissa[i - 1] {
                return Err(MeasurementError::NotIncreasing { index: i });
            }
        }
        Ok(())
    }

    /// True when every point carries a positive uncertainty.
    pub fn has_sigma(&self) -> bool {
        !self.sigma.is_empty() && self.sigma.iter().all(|&s| s > 0.0)
    }

    /// Scales signal and sigma by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            abscissa: self.abscissa.clone(),
            signal: self.signal.iter().map(|v| v * c).collect(),
            sigma: self.sigma.iter().map(|v| v * c.abs()).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            let _ = writeln!(out, "{},{},{}", self.abscissa[i], self.signal[i], self.sigma[i]);
        }
        out
    }

    /// Parses the `abscissa,signal,sigma` CSV. Metadata is left empty.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MeasurementError> {
        let mut abscissa = Vec::new();
        let mut signal = Vec::new();
        let mut sigma = Vec::new();
        let mut lines = BufReader::new(reader).lines();
        match lines.next() {
            Some(header) => {
                let header = header?;
                if header.trim() != TRACE_CSV_HEADER {
                    return Err(MeasurementError::Csv {
                        line: 1,
                        message: format!("expected header `{TRACE_CSV_HEADER}`, found `{}`", header.trim()),
                    });
                }
            }
            None => {
                return Err(MeasurementError::Csv {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(MeasurementError::Csv {
                    line: line_no,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut parsed = [0.0; 3];
            for (slot, field) in parsed.iter_mut().zip(&fields) {
                *slot = field.parse::<f64>().map_err(|e| MeasurementError::Csv {
                    line: line_no,
                    message: format!("`{field}`: {e}"),
                })?;
            }
            abscissa.push(parsed[0]);
            signal.push(parsed[1]);
            sigma.push(parsed[2]);
        }
        let trace = Self {
            abscissa,
            signal,
            sigma,
            meta: TraceMeta::default(),
        };
        trace.validate().map_err(|e| match e {
            MeasurementError::NotIncreasing { index } | MeasurementError::InvalidValue { index } => {
                MeasurementError::Csv {
                    line: index + 2,
                    message: e.to_string(),
                }
            }
            other => other,
        })?;
        Ok(trace)
    }
}

fn check_populations(populations: &[f64]) -> Result<(), MeasurementError> {
    for (index, &value) in populations.iter().enumerate() {
        if !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(&value) {
            return Err(MeasurementError::PopulationOutOfRange { index, value });
        }
    }
    Ok(())
}

/// RNG for point `index` of a trace drawn with `seed`. Counter-based: the
/// stream id is the point index, so draws do not depend on evaluation order.
pub fn point_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Shot-noise sampled photon counts per cycle. Each point draws one Poisson
/// variate with mean `cycles * mu`, equivalent in distribution to summing
/// `cycles` single-readout draws.
pub fn sample_trace(
    abscissa: &[f64],
    populations: &[f64],
    readout: &ReadoutModel,
    seed: u64,
    meta: TraceMeta,
) -> Result<Trace, MeasurementError> {
    readout.validate()?;
    check_populations(populations)?;
    let cycles = readout.cycles as f64;
    let mut signal = Vec::with_capacity(populations.len());
    let mut sigma = Vec::with_capacity(populations.len());
    for (i, &p) in populations.iter().enumerate() {
        let mean_total = cycles * readout.mean_counts(p.clamp(0.0, 1.0));
        let mut rng = point_rng(seed, i as u64);
        let total = Poisson::new(mean_total)
            .map(|d| d.sample(&mut rng))
            .map_err(|_| MeasurementError::InvalidReadout {
                name: "counts_bright",
                value: readout.counts_bright,
            })?;
        signal.push(total / cycles);
        sigma.push(total.sqrt() / cycles);
    }
    Trace::new(
        abscissa.to_vec(),
        signal,
        sigma,
        TraceMeta {
            seed: Some(seed),
            noiseless: false,
            ..meta
        },
    )
}

/// The affine readout map without noise; sigma is zero.
pub fn noiseless_trace(
    abscissa: &[f64],
    populations: &[f64],
    readout: &ReadoutModel,
    meta: TraceMeta,
) -> Result<Trace, MeasurementError> {
    readout.validate()?;
    check_populations(populations)?;
    let signal = populations
        .iter()
        .map(|&p| readout.mean_counts(p.clamp(0.0, 1.0)))
        .collect();
    Trace::new(
        abscissa.to_vec(),
        signal,
        vec![0.0; populations.len()],
        TraceMeta {
            noiseless: true,
            ..meta
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsrSweepParams {
    /// Sweep bounds, MHz. When either is absent the window is centered on
    /// the selected triplets and extends `span / 2` beyond the outermost
    /// centers.
    pub f_start: Option<f64>,
    pub f_stop: Option<f64>,
    pub span: f64,
    pub n_points: usize,
    /// Lorentzian FWHM per hyperfine line, MHz.
    pub linewidth: f64,
    /// Fractional dip per line.
    pub dip_depth: f64,
    /// Electron branches whose triplets appear in the sweep.
    pub branches: Vec<Branch>,
}

impl Default for EsrSweepParams {
    fn default() -> Self {
        Self {
            f_start: None,
            f_stop: None,
            span: 12.0,
            n_points: 401,
            linewidth: 0.8,
            dip_depth: 0.2,
            branches: vec![Branch::Plus],
        }
    }
}

impl EsrSweepParams {
    /// Explicit window `[f_start, f_stop]`.
    pub fn between(f_start: f64, f_stop: f64) -> Self {
        Self {
            f_start: Some(f_start),
            f_stop: Some(f_stop),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        if let (Some(a), Some(b)) = (self.f_start, self.f_stop) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(MeasurementError::InvalidSweep { name: "f_stop", value: b });
            }
        }
        if !(self.span.is_finite() && self.span > 0.0) {
            return Err(MeasurementError::InvalidSweep {
                name: "span",
                value: self.span,
            });
        }
        if self.n_points < 2 {
            return Err(MeasurementError::InvalidSweep {
                name: "n_points",
                value: self.n_points as f64,
            });
        }
        if !(self.linewidth.is_finite() && self.linewidth > 0.0) {
            return Err(MeasurementError::InvalidSweep {
                name: "linewidth",
                value: self.linewidth,
            });
        }
        if !(self.dip_depth.is_finite() && self.dip_depth >= 0.0) {
            return Err(MeasurementError::InvalidSweep {
                name: "dip_depth",
                value: self.dip_depth,
            });
        }
        if self.branches.is_empty() {
            return Err(MeasurementError::InvalidSweep {
                name: "branches",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Sweep bounds given the line centers of the selected triplets.
    pub fn window(&self, centers: &[f64]) -> (f64, f64) {
        match (self.f_start, self.f_stop) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo - 0.5 * self.span, hi + 0.5 * self.span)
            }
        }
    }

    pub fn grid(&self, centers: &[f64]) -> Vec<f64> {
        let (a, b) = self.window(centers);
        let step = (b - a) / (self.n_points - 1) as f64;
        (0..self.n_points).map(|i| a + step * i as f64).collect()
    }
}

/// Unit-peak Lorentzian with full width at half maximum `fwhm`.
pub fn lorentzian(f: f64, center: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw * hw / ((f - center).powi(2) + hw * hw)
}

/// Noiseless ESR line shape: `1 - Σ_k depth L(f; f_k, width)` over the
/// requested branches' hyperfine lines. Returns (grid, signal, line centers).
pub fn esr_ideal(
    spin: &SpinSystemParams,
    sweep: &EsrSweepParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), MeasurementError> {
    sweep.validate()?;
    let levels = diagonalize(&build_hamiltonian(spin)?)?;
    let mut centers = Vec::new();
    let mut triplet_centers = Vec::new();
    for &branch in &sweep.branches {
        let triplet = transition_triplet(&levels, branch)?;
        centers.extend(triplet.freqs);
        triplet_centers.push(triplet.center);
    }
    let grid = sweep.grid(&triplet_centers);
    let signal = grid
        .iter()
        .map(|&f| {
            1.0 - centers
                .iter()
                .map(|&c| sweep.dip_depth * lorentzian(f, c, sweep.linewidth))
                .sum::<f64>()
        })
        .collect();
    Ok((grid, signal, centers))
}

/// ESR sweep, shot-noise sampled through [`sample_trace`]. `seed = None`
/// returns the noiseless affine-mapped spectrum.
pub fn esr_spectrum(
    spin: &SpinSystemParams,
    sweep: &EsrSweepParams,
    readout: &ReadoutModel,
    seed: Option<u64>,
) -> Result<Trace, MeasurementError> {
    let (grid, ideal, _) = esr_ideal(spin, sweep)?;
    let meta = TraceMeta {
        kind: "esr".into(),
        abscissa_unit: "MHz".into(),
        seed,
        noiseless: seed.is_none(),
        params: serde_json::json!({ "spin": spin, "sweep": sweep, "readout": readout }),
    };
    match seed {
        Some(seed) => sample_trace(&grid, &ideal, readout, seed, meta),
        None => noiseless_trace(&grid, &ideal, readout, meta),
    }
}
