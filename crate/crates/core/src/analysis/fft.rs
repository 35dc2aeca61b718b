use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::measurement::Trace;

/// Relative tolerance on abscissa step uniformity.
pub const UNIFORMITY_TOL: f64 = 1e-6;
pub const MIN_FFT_POINTS: usize = 8;

pub const SPECTRUM_CSV_HEADER: &str = "freq_mhz,amplitude";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    None,
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            // Symmetric Hann, zero at both ends.
            Window::Hann if n == 1 => vec![1.0],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Uniform, ascending from 0 to Nyquist, MHz.
    pub freqs: Vec<f64>,
    /// Unscaled DFT magnitudes.
    pub amps: Vec<f64>,
    /// Bin spacing, MHz.
    pub resolution: f64,
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SPECTRUM_CSV_HEADER);
        out.push('\n');
        for (f, a) in self.freqs.iter().zip(&self.amps) {
            out.push_str(&format!("{f},{a}\n"));
        }
        out
    }
}

/// Returns the mean step, or the first index whose step deviates.
pub fn uniform_step(abscissa: &[f64]) -> Result<f64, AnalysisError> {
    let n = abscissa.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints { needed: 2, got: n });
    }
    let mean = (abscissa[n - 1] - abscissa[0]) / (n - 1) as f64;
    for i in 1..n {
        let step = abscissa[i] - abscissa[i - 1];
        if (step - mean).abs() > UNIFORMITY_TOL * mean.abs() {
            return Err(AnalysisError::NonUniformSampling { index: i });
        }
    }
    Ok(mean)
}

/// Mean-subtracted, windowed samples ready for transformation.
pub fn prepare_samples(signal: &[f64], window: Window) -> Vec<f64> {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    window
        .coefficients(n)
        .iter()
        .zip(signal)
        .map(|(w, v)| w * (v - mean))
        .collect()
}

/// Full complex DFT of real samples zero-padded to `padded_len`.
pub fn dft(samples: &[f64], padded_len: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(padded_len.max(samples.len()))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(buf.len());
    fft.process(&mut buf);
    buf
}

/// One-sided magnitude spectrum of a uniformly sampled trace.
pub fn fft_spectrum(trace: &Trace, window: Window, zero_pad_factor: usize) -> Result<Spectrum, AnalysisError> {
    let n = trace.len();
    if n < MIN_FFT_POINTS {
        return Err(AnalysisError::TooFewPoints {
            needed: MIN_FFT_POINTS,
            got: n,
        });
    }
    if zero_pad_factor < 1 {
        return Err(AnalysisError::InvalidOption {
            name: "zero_pad_factor",
            value: zero_pad_factor as f64,
        });
    }
    let dt = uniform_step(&trace.abscissa)?;
    let samples = prepare_samples(&trace.signal, window);
    let padded = n * zero_pad_factor;
    let spectrum = dft(&samples, padded);
    let resolution = 1.0 / (padded as f64 * dt);
    let bins = padded / 2 + 1;
    Ok(Spectrum {
        freqs: (0..bins).map(|k| k as f64 * resolution).collect(),
        amps: spectrum[..bins].iter().map(|z| z.norm()).collect(),
        resolution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub freq: f64,
    pub amp: f64,
}

/// Local maxima above `rel_threshold * max`, refined by three-point
/// parabolic interpolation, strongest first.
pub fn find_peaks(spec: &Spectrum, rel_threshold: f64) -> Vec<Peak> {
    let a = &spec.amps;
    let max = a.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 || a.len() < 3 {
        return Vec::new();
    }
    let floor = rel_threshold * max;
    let mut peaks = Vec::new();
    for i in 1..a.len() - 1 {
        if a[i] > floor && a[i] > a[i - 1] && a[i] >= a[i + 1] {
            let (l, c, r) = (a[i - 1], a[i], a[i + 1]);
            let denom = l - 2.0 * c + r;
            let shift = if denom != 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
            peaks.push(Peak {
                freq: spec.freqs[i] + shift * spec.resolution,
                amp: c - 0.25 * (l - r) * shift,
            });
        }
    }
    peaks.sort_by(|x, y| y.amp.total_cmp(&x.amp));
    peaks
}
