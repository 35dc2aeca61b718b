//! Closed-form time-domain signals: detuned Rabi nutation, its equal-weight
//! average over the three nuclear projections, Ramsey fringes and the spin
//! echo. Times in μs, frequencies in MHz.
//!
//! The Rabi forms return the oscillatory (AC) part of the m_s = 0
//! population. The full population for a single projection is
//! `1 - r/2 + rabi_single/2` with `r = f0^2 / f_e^2`; see
//! [`rabi_population`].

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spin::effective_rabi;

/// Nuclear projections in the order used throughout the crate.
pub const PROJECTIONS: [i8; 3] = [-1, 0, 1];

/// Hyperfine splitting assumed when nothing better is known, MHz.
pub const DEFAULT_ALPHA_N: f64 = 2.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("drive parameter `{name}` is invalid: {value}")]
    InvalidDrive { name: &'static str, value: f64 },
    #[error("decoherence parameter `{name}` must be > 0 or infinite, got {value}")]
    InvalidDecoherence { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveParams {
    /// Resonant Rabi frequency, MHz.
    pub f0: f64,
    /// Carrier detuning from the central hyperfine line, MHz.
    pub delta_f: f64,
    /// Hyperfine splitting between adjacent lines, MHz.
    pub alpha_n: f64,
    /// Drive phase, rad.
    pub phase: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            f0: 4.2,
            delta_f: 0.0,
            alpha_n: DEFAULT_ALPHA_N,
            phase: 0.0,
        }
    }
}

impl DriveParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("f0", self.f0),
            ("delta_f", self.delta_f),
            ("alpha_n", self.alpha_n),
            ("phase", self.phase),
        ] {
            if !value.is_finite() {
                return Err(DynamicsError::InvalidDrive { name, value });
            }
        }
        if self.f0 < 0.0 {
            return Err(DynamicsError::InvalidDrive { name: "f0", value: self.f0 });
        }
        if self.alpha_n < 0.0 {
            return Err(DynamicsError::InvalidDrive {
                name: "alpha_n",
                value: self.alpha_n,
            });
        }
        Ok(())
    }

    /// Detuning seen by nuclear projection `m`: `delta_f - m * alpha_n`.
    pub fn detuning(&self, m_i: i8) -> f64 {
        self.delta_f - f64::from(m_i) * self.alpha_n
    }

    /// Same drive, with `alpha_n` taken from the spin system's 0 -> +1
    /// triplet splitting.
    pub fn with_spin_splitting(
        self,
        spin: &crate::spin::SpinSystemParams,
    ) -> Result<Self, crate::spin::SpinError> {
        use crate::spin::{build_hamiltonian, diagonalize, transition_triplet, Branch};
        let levels = diagonalize(&build_hamiltonian(spin)?)?;
        let triplet = transition_triplet(&levels, Branch::Plus)?;
        Ok(Self {
            alpha_n: triplet.splitting,
            ..self
        })
    }
}

/// Decay constants in μs. `f64::INFINITY` disables the corresponding decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoherenceParams {
    #[serde(with = "finite_or_inf")]
    pub t0: f64,
    #[serde(with = "finite_or_inf")]
    pub t2_star: f64,
    #[serde(with = "finite_or_inf")]
    pub tau_c: f64,
    pub echo_exponent: f64,
    /// Stretch exponent of the free-induction envelope `exp(-(t/T2*)^n)`.
    pub ramsey_exponent: f64,
}

impl Default for DecoherenceParams {
    fn default() -> Self {
        Self::none()
    }
}

impl DecoherenceParams {
    pub fn none() -> Self {
        Self {
            t0: f64::INFINITY,
            t2_star: f64::INFINITY,
            tau_c: f64::INFINITY,
            echo_exponent: 1.0,
            ramsey_exponent: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("t0", self.t0),
            ("t2_star", self.t2_star),
            ("tau_c", self.tau_c),
        ] {
            if value.is_nan() || value <= 0.0 {
                return Err(DynamicsError::InvalidDecoherence { name, value });
            }
        }
        for (name, value) in [
            ("echo_exponent", self.echo_exponent),
            ("ramsey_exponent", self.ramsey_exponent),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(DynamicsError::InvalidDecoherence { name, value });
            }
        }
        Ok(())
    }
}

/// JSON has no infinity literal; `null` stands for "no decay".
mod finite_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `exp(-t / tau)`, equal to 1 for infinite `tau`.
pub fn exp_decay(t: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        1.0
    } else {
        (-t / tau).exp()
    }
}

/// `exp(-(t / tau)^n)`, equal to 1 for infinite `tau`.
pub fn stretched_decay(t: f64, tau: f64, exponent: f64) -> f64 {
    if tau.is_infinite() {
        1.0
    } else {
        (-(t / tau).powf(exponent)).exp()
    }
}

/// Nutation weight `f0^2 / f_e^2`; zero when there is no drive at all.
pub fn nutation_weight(f0: f64, delta: f64) -> f64 {
    let fe2 = f0 * f0 + delta * delta;
    if fe2 == 0.0 {
        0.0
    } else {
        f0 * f0 / fe2
    }
}

/// Detuned Rabi nutation, AC component:
/// `exp(-t/t0) (f0^2/f_e^2) cos(2 pi f_e t)`.
pub fn rabi_single(t: f64, f0: f64, delta: f64, t0: f64) -> f64 {
    let fe = effective_rabi(f0, delta);
    exp_decay(t, t0) * nutation_weight(f0, delta) * (TAU * fe * t).cos()
}

/// Full m_s = 0 population for one projection, decay on the AC part only.
pub fn rabi_population(t: f64, f0: f64, delta: f64, t0: f64) -> f64 {
    1.0 - 0.5 * nutation_weight(f0, delta) + 0.5 * rabi_single(t, f0, delta, t0)
}

/// Equal-weight average of the three projection nutations.
pub fn rabi_average(t: f64, drive: &DriveParams, t0: f64) -> f64 {
    PROJECTIONS
        .iter()
        .map(|&m| rabi_single(t, drive.f0, drive.detuning(m), t0))
        .sum::<f64>()
        / 3.0
}

/// Mean nutation weight over the three projections; the DC level of the
/// averaged population is `1 - mean_weight / 2`.
pub fn mean_nutation_weight(drive: &DriveParams) -> f64 {
    PROJECTIONS
        .iter()
        .map(|&m| nutation_weight(drive.f0, drive.detuning(m)))
        .sum::<f64>()
        / 3.0
}

/// Averaged m_s = 0 population after a single Rabi pulse of length `t`.
pub fn rabi_average_population(t: f64, drive: &DriveParams, t0: f64) -> f64 {
    1.0 - 0.5 * mean_nutation_weight(drive) + 0.5 * rabi_average(t, drive, t0)
}

/// Magnitude of the analytic (complex) envelope of [`rabi_average`]:
/// `exp(-t/t0) |Σ_m w_m exp(2πi f_{e,m} t)| / 3`. Bounds `|rabi_average|`
/// from above and carries only the beat between the nutation frequencies.
pub fn rabi_envelope(t: f64, drive: &DriveParams, t0: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for &m in &PROJECTIONS {
        let delta = drive.detuning(m);
        let w = nutation_weight(drive.f0, delta);
        let phase = TAU * effective_rabi(drive.f0, delta) * t;
        re += w * phase.cos();
        im += w * phase.sin();
    }
    exp_decay(t, t0) * re.hypot(im) / 3.0
}

/// First local minimum of [`rabi_envelope`] on `(0, t_max]`, located on a
/// grid of step `dt` and refined by golden-section search.
pub fn first_envelope_minimum(drive: &DriveParams, t0: f64, t_max: f64, dt: f64) -> Option<f64> {
    let env = |t: f64| rabi_envelope(t, drive, t0);
    let n = (t_max / dt).floor() as usize;
    let mut prev = env(0.0);
    let mut cur = env(dt);
    for k in 2..=n {
        let next = env(k as f64 * dt);
        if cur < prev && cur <= next {
            let (mut a, mut b) = ((k - 2) as f64 * dt, k as f64 * dt);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..100 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if env(c) < env(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev = cur;
        cur = next;
    }
    None
}

/// Ramsey fringes: `exp(-t/T2*) (1/3) Σ_m cos(2π δ_m t)`.
pub fn ramsey_signal(t: f64, delta_f: f64, alpha_n: f64, t2_star: f64) -> f64 {
    ramsey_signal_stretched(t, delta_f, alpha_n, t2_star, 1.0)
}

/// [`ramsey_signal`] with envelope `exp(-(t/T2*)^n)`; `n = 2` is Gaussian
/// dephasing.
pub fn ramsey_signal_stretched(t: f64, delta_f: f64, alpha_n: f64, t2_star: f64, exponent: f64) -> f64 {
    let beat: f64 = PROJECTIONS
        .iter()
        .map(|&m| (TAU * (delta_f - f64::from(m) * alpha_n) * t).cos())
        .sum();
    stretched_decay(t, t2_star, exponent) * beat / 3.0
}

/// Spin echo after `π/2 - τ - π - τ' - π/2`. Static detunings refocus
/// completely at `τ = τ'`, where the signal is the envelope
/// `exp(-((τ+τ')/τ_c)^n)`; elsewhere the three detunings beat in `τ - τ'`.
pub fn echo_signal(
    tau: f64,
    tau_prime: f64,
    delta_f: f64,
    alpha_n: f64,
    tau_c: f64,
    echo_exponent: f64,
) -> f64 {
    let envelope = stretched_decay(tau + tau_prime, tau_c, echo_exponent);
    envelope * ramsey_signal(tau - tau_prime, delta_f, alpha_n, f64::INFINITY)
}

/// Echo envelope alone, as a function of total free-evolution time.
pub fn echo_envelope(total: f64, tau_c: f64, echo_exponent: f64) -> f64 {
    stretched_decay(total, tau_c, echo_exponent)
}

/// Half-period of a resonant nutation, i.e. the π-pulse length.
pub fn pi_pulse_length(f0: f64) -> f64 {
    0.5 / f0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn rabi_single_examples() {
        assert_eq!(rabi_single(0.0, 4.2, 0.0, INF), 1.0);
        let half = 0.5 / 4.2;
        assert!((rabi_single(half, 4.2, 0.0, INF) + 1.0).abs() < 1e-12);
        // 0.11905 μs is the rounded half period.
        assert!((rabi_single(0.11905, 4.2, 0.0, INF) + 1.0).abs() < 1e-6);
        let r = rabi_single(0.0, 4.2, 2.2, INF);
        assert!((r - (4.2f64 / 4.7414).powi(2)).abs() < 1e-4);
        assert!((r - 0.7847).abs() < 1e-4);
    }

    #[test]
    fn rabi_average_examples() {
        let drive = DriveParams { f0: 4.2, delta_f: 0.0, alpha_n: 2.2, phase: 0.0 };
        let v = rabi_average(0.0, &drive, INF);
        let w = 4.2f64.powi(2) / (4.2f64.powi(2) + 2.2f64.powi(2));
        assert!((v - (1.0 + 2.0 * w) / 3.0).abs() < 1e-12);
        assert!((v - 0.8565).abs() < 1e-4);

        let degenerate = DriveParams { alpha_n: 0.0, delta_f: 1.3, ..drive };
        for k in 0..200 {
            let t = k as f64 * 0.0173;
            let a = rabi_average(t, &degenerate, 2.0);
            let s = rabi_single(t, 4.2, 1.3, 2.0);
            assert!((a - s).abs() < 1e-14);
        }
    }

    #[test]
    fn rabi_average_symmetric_in_detuning_sign() {
        for delta in [0.3, 1.1, 2.2, 3.3] {
            let plus = DriveParams { f0: 5.0, delta_f: delta, alpha_n: 2.2, phase: 0.0 };
            let minus = DriveParams { delta_f: -delta, ..plus };
            for k in 0..300 {
                let t = k as f64 * 0.01;
                assert!((rabi_average(t, &plus, 2.0) - rabi_average(t, &minus, 2.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ramsey_examples() {
        assert_eq!(ramsey_signal(0.0, -3.3, 2.2, 2.3), 1.0);
        for k in 0..100 {
            let t = k as f64 * 0.037;
            let pure = (4.0 * PI * t).cos();
            assert!((ramsey_signal(t, 2.0, 0.0, INF) - pure).abs() < 1e-12);
            let beat = ((TAU * 1.1 * t).cos() + (TAU * 3.3 * t).cos() + (TAU * 5.5 * t).cos()) / 3.0;
            assert!((ramsey_signal(t, -3.3, 2.2, INF) - beat).abs() < 1e-12);
        }
    }

    #[test]
    fn echo_examples() {
        assert_eq!(echo_signal(0.0, 0.0, 1.0, 2.2, 4.0, 1.0), 1.0);
        let v = echo_signal(2.0, 2.0, -3.3, 2.2, 4.0, 1.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.3679).abs() < 1e-4);

        // Without envelope decay the refocused point is the global maximum.
        let tau = 1.5;
        let (mut best, mut best_tp) = (f64::MIN, 0.0);
        for k in 0..=3000 {
            let tp = k as f64 * 0.001;
            let s = echo_signal(tau, tp, -3.3, 2.2, INF, 1.0);
            if s > best {
                best = s;
                best_tp = tp;
            }
        }
        assert!((best_tp - tau).abs() < 1e-9);
    }

    #[test]
    fn envelope_minima_match_beat_half_period() {
        let strong = DriveParams { f0: 8.4, ..Default::default() };
        let tmin = first_envelope_minimum(&strong, INF, 5.0, 0.001).unwrap();
        let beat = effective_rabi(8.4, 2.2) - 8.4;
        assert!((tmin - 0.5 / beat).abs() < 1e-6);
        assert!((tmin - 1.764).abs() < 1e-3);

        let weak = DriveParams { f0: 4.2, ..Default::default() };
        let tmin = first_envelope_minimum(&weak, INF, 5.0, 0.001).unwrap();
        assert!(tmin < 1.0);
    }

    #[test]
    fn envelope_bounds_signal() {
        let drive = DriveParams { f0: 6.2, delta_f: 0.0, ..Default::default() };
        for k in 0..2000 {
            let t = k as f64 * 0.0025;
            assert!(rabi_average(t, &drive, 2.0).abs() <= rabi_envelope(t, &drive, 2.0) + 1e-12);
        }
    }

    #[test]
    fn damped_envelope_windowed_max_non_increasing() {
        let drive = DriveParams { f0: 6.2, delta_f: 0.0, ..Default::default() };
        let beat_period = 1.0 / (effective_rabi(6.2, 2.2) - 6.2);
        let dt = 0.002;
        let window = (1.05 * beat_period / dt) as usize;
        let env: Vec<f64> = (0..6000).map(|k| rabi_envelope(k as f64 * dt, &drive, 2.0)).collect();
        let maxima: Vec<f64> = env
            .windows(window)
            .map(|w| w.iter().cloned().fold(f64::MIN, f64::max))
            .collect();
        for w in maxima.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn no_drive_gives_zero_weight() {
        assert_eq!(nutation_weight(0.0, 0.0), 0.0);
        assert_eq!(rabi_population(1.0, 0.0, 0.0, INF), 1.0);
    }

    #[test]
    fn validation() {
        assert!(DriveParams { f0: -1.0, ..Default::default() }.validate().is_err());
        assert!(DriveParams { alpha_n: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(DecoherenceParams { t0: 0.0, ..DecoherenceParams::none() }.validate().is_err());
        assert!(DecoherenceParams::none().validate().is_ok());
    }

    #[test]
    fn decoherence_json_uses_null_for_infinity() {
        let d = DecoherenceParams { t0: 2.0, ..DecoherenceParams::none() };
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"t2_star\":null"));
        let back: DecoherenceParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
