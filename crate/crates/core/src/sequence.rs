//! Pulse sequences and the piecewise rotating-frame propagator.
//!
//! Each nuclear projection is treated as its own two-level system
//! {m_s = 0, m_s = +1} with a static detuning `δ_m = delta_f - m alpha_N`.
//! Every segment is an exact SU(2) rotation; decoherence enters as damping
//! of the Bloch-vector component that the segment rotates:
//!
//! * microwave pulses damp the component perpendicular to the drive axis
//!   by `exp(-t/t0)`,
//! * free evolution damps the transverse components along a single
//!   coherence clock counted in accumulated free-evolution time: the T2*
//!   exponential for plain free induction, the stretched echo envelope
//!   when the sequence contains a refocusing π pulse.
//!
//! Bloch convention: `z = +1` is m_s = 0, so the m_s = 0 population is
//! `(1 + z) / 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    exp_decay, stretched_decay, DecoherenceParams, DriveParams, DynamicsError, PROJECTIONS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("sequence must have at least a polarizing and a readout laser pulse")]
    TooShort,
    #[error("sequence must begin with a laser pulse")]
    NoPolarization,
    #[error("sequence must end with a laser pulse")]
    NoReadout,
    #[error("element {index} has invalid duration {value}")]
    InvalidDuration { index: usize, value: f64 },
    #[error("element {index} has invalid parameter `{name}` = {value}")]
    InvalidElement {
        index: usize,
        name: &'static str,
        value: f64,
    },
    #[error("nuclear projection must be -1, 0 or +1, got {0}")]
    InvalidProjection(i8),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseElement {
    /// Optical pumping / readout. Resets the spin to m_s = 0.
    Laser { duration: f64 },
    /// Finite microwave pulse at Rabi frequency `f0`, carrier detuning from
    /// the sequence's drive context.
    Microwave { duration: f64, f0: f64, phase: f64 },
    /// Zero-duration ideal resonant rotation by `angle` about
    /// `(cos phase, sin phase, 0)`.
    HardPulse { angle: f64, phase: f64 },
    FreeEvolution { duration: f64 },
}

/// Which coherence envelope governs free evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceEnvelope {
    /// `exp(-T/T2*)`
    FreeInduction,
    /// `exp(-(T/τ_c)^n)`
    Refocused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub elements: Vec<PulseElement>,
    pub envelope: CoherenceEnvelope,
}

fn is_pi_rotation(angle: f64) -> bool {
    ((angle / PI).round() as i64 % 2 != 0) && (angle / PI - (angle / PI).round()).abs() < 1e-9
}

impl PulseSequence {
    /// Builds a sequence; the envelope is `Refocused` iff a hard π pulse sits
    /// between two free-evolution periods.
    pub fn new(elements: Vec<PulseElement>) -> Self {
        let mut seen_free = false;
        let mut pending_pi = false;
        let mut refocused = false;
        for e in &elements {
            match *e {
                PulseElement::FreeEvolution { duration } if duration > 0.0 => {
                    if pending_pi {
                        refocused = true;
                    }
                    seen_free = true;
                }
                PulseElement::HardPulse { angle, .. } if seen_free && is_pi_rotation(angle) => {
                    pending_pi = true;
                }
                _ => {}
            }
        }
        let envelope = if refocused {
            CoherenceEnvelope::Refocused
        } else {
            CoherenceEnvelope::FreeInduction
        };
        Self { elements, envelope }
    }

    pub fn with_envelope(mut self, envelope: CoherenceEnvelope) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.elements.len() < 2 {
            return Err(SequenceError::TooShort);
        }
        if !matches!(self.elements[0], PulseElement::Laser { .. }) {
            return Err(SequenceError::NoPolarization);
        }
        if !matches!(self.elements.last(), Some(PulseElement::Laser { .. })) {
            return Err(SequenceError::NoReadout);
        }
        for (index, e) in self.elements.iter().enumerate() {
            let duration = match *e {
                PulseElement::Laser { duration } | PulseElement::FreeEvolution { duration } => duration,
                PulseElement::Microwave { duration, f0, phase } => {
                    if !f0.is_finite() || f0 < 0.0 {
                        return Err(SequenceError::InvalidElement { index, name: "f0", value: f0 });
                    }
                    if !phase.is_finite() {
                        return Err(SequenceError::InvalidElement { index, name: "phase", value: phase });
                    }
                    duration
                }
                PulseElement::HardPulse { angle, phase } => {
                    if !angle.is_finite() {
                        return Err(SequenceError::InvalidElement { index, name: "angle", value: angle });
                    }
                    if !phase.is_finite() {
                        return Err(SequenceError::InvalidElement { index, name: "phase", value: phase });
                    }
                    0.0
                }
            };
            if !duration.is_finite() || duration < 0.0 {
                return Err(SequenceError::InvalidDuration { index, value: duration });
            }
        }
        Ok(())
    }

    /// `Laser(pump) - MW(t) - Laser(readout)`.
    pub fn rabi(mw_duration: f64, f0: f64, phase: f64) -> Self {
        Self::new(vec![
            PulseElement::Laser { duration: LASER_PUMP },
            PulseElement::Microwave { duration: mw_duration, f0, phase },
            PulseElement::Laser { duration: LASER_READOUT },
        ])
    }

    /// `π/2 - t - π/2` with ideal pulses. The closing pulse has phase π so
    /// that the signal is +1 at `t = 0`.
    pub fn ramsey(free: f64) -> Self {
        Self::new(vec![
            PulseElement::Laser { duration: LASER_PUMP },
            PulseElement::HardPulse { angle: PI / 2.0, phase: 0.0 },
            PulseElement::FreeEvolution { duration: free },
            PulseElement::HardPulse { angle: PI / 2.0, phase: PI },
            PulseElement::Laser { duration: LASER_READOUT },
        ])
    }

    /// Ramsey with finite resonant pulses of Rabi frequency `f0`.
    pub fn ramsey_finite(free: f64, f0: f64) -> Self {
        let quarter = 0.25 / f0;
        Self::new(vec![
            PulseElement::Laser { duration: LASER_PUMP },
            PulseElement::Microwave { duration: quarter, f0, phase: 0.0 },
            PulseElement::FreeEvolution { duration: free },
            PulseElement::Microwave { duration: quarter, f0, phase: PI },
            PulseElement::Laser { duration: LASER_READOUT },
        ])
    }

    /// `π/2 - τ - π - τ' - π/2` with ideal pulses, all about x.
    pub fn echo(tau: f64, tau_prime: f64) -> Self {
        Self::new(vec![
            PulseElement::Laser { duration: LASER_PUMP },
            PulseElement::HardPulse { angle: PI / 2.0, phase: 0.0 },
            PulseElement::FreeEvolution { duration: tau },
            PulseElement::HardPulse { angle: PI, phase: 0.0 },
            PulseElement::FreeEvolution { duration: tau_prime },
            PulseElement::HardPulse { angle: PI / 2.0, phase: 0.0 },
            PulseElement::Laser { duration: LASER_READOUT },
        ])
        .with_envelope(CoherenceEnvelope::Refocused)
    }

    /// Echo with finite resonant pulses of Rabi frequency `f0`.
    pub fn echo_finite(tau: f64, tau_prime: f64, f0: f64) -> Self {
        let quarter = 0.25 / f0;
        Self::new(vec![
            PulseElement::Laser { duration: LASER_PUMP },
            PulseElement::Microwave { duration: quarter, f0, phase: 0.0 },
            PulseElement::FreeEvolution { duration: tau },
            PulseElement::Microwave { duration: 2.0 * quarter, f0, phase: 0.0 },
            PulseElement::FreeEvolution { duration: tau_prime },
            PulseElement::Microwave { duration: quarter, f0, phase: 0.0 },
            PulseElement::Laser { duration: LASER_READOUT },
        ])
        .with_envelope(CoherenceEnvelope::Refocused)
    }
}

/// Optical pumping time, μs.
pub const LASER_PUMP: f64 = 3.0;
/// Readout pulse length, μs.
pub const LASER_READOUT: f64 = 0.3;

/// 2x2 unitary `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2(pub [[Complex64; 2]; 2]);

impl Su2 {
    /// `exp(-i (angle/2) n·σ)` for a unit axis `n`.
    pub fn rotation(angle: f64, axis: [f64; 3]) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        let [nx, ny, nz] = axis;
        Su2([
            [Complex64::new(c, -s * nz), Complex64::new(-s * ny, -s * nx)],
            [Complex64::new(s * ny, -s * nx), Complex64::new(c, s * nz)],
        ])
    }

    /// Rotating-frame propagator for a drive of Rabi frequency `f0`, phase
    /// `phase` and detuning `delta` (MHz) applied for `t` μs.
    pub fn drive(t: f64, f0: f64, phase: f64, delta: f64) -> Self {
        let fe = f0.hypot(delta);
        if fe == 0.0 {
            return Self::rotation(0.0, [0.0, 0.0, 1.0]);
        }
        let axis = [f0 * phase.cos() / fe, f0 * phase.sin() / fe, delta / fe];
        Self::rotation(2.0 * PI * fe * t, axis)
    }

    pub fn adjoint(&self) -> Self {
        let m = self.0;
        Su2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (self.0, other.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Su2(out)
    }

    /// Max-entry deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self).0;
        let one = Complex64::new(1.0, 0.0);
        [(p[0][0] - one).norm(), p[0][1].norm(), p[1][0].norm(), (p[1][1] - one).norm()]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// The SO(3) rotation this unitary induces on Bloch vectors:
    /// `R_ij = Tr(σ_i U σ_j U†) / 2`.
    pub fn bloch_rotation(&self) -> [[f64; 3]; 3] {
        let [[a, b], [c, d]] = self.0;
        // Columns of R are images of the unit vectors, computed from
        // U σ_j U† in closed form.
        let sigma = |j: usize| -> [[Complex64; 2]; 2] {
            let o = Complex64::new(0.0, 0.0);
            let one = Complex64::new(1.0, 0.0);
            let i = Complex64::new(0.0, 1.0);
            match j {
                0 => [[o, one], [one, o]],
                1 => [[o, -i], [i, o]],
                _ => [[one, o], [o, -one]],
            }
        };
        let u = [[a, b], [c, d]];
        let ud = self.adjoint().0;
        let mut r = [[0.0; 3]; 3];
        for j in 0..3 {
            let sj = sigma(j);
            let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
            for p in 0..2 {
                for q in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            m[p][q] += u[p][k] * sj[k][l] * ud[l][q];
                        }
                    }
                }
            }
            // Decompose m = x σx + y σy + z σz.
            r[0][j] = m[0][1].re;
            r[1][j] = -m[0][1].im;
            r[2][j] = m[0][0].re;
        }
        r
    }
}

fn apply(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, row) in r.iter().enumerate() {
        out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

/// Scales the part of `v` perpendicular to unit `axis` by `factor`.
fn damp_perpendicular(v: [f64; 3], axis: [f64; 3], factor: f64) -> [f64; 3] {
    let par = v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2];
    let mut out = [0.0; 3];
    for i in 0..3 {
        let p = par * axis[i];
        out[i] = p + factor * (v[i] - p);
    }
    out
}

/// Final m_s = 0 population for a fixed nuclear projection `m_i`.
pub fn propagate_sequence(
    seq: &PulseSequence,
    drive: &DriveParams,
    deco: &DecoherenceParams,
    m_i: i8,
) -> Result<f64, SequenceError> {
    seq.validate()?;
    drive.validate()?;
    deco.validate()?;
    if !(-1..=1).contains(&m_i) {
        return Err(SequenceError::InvalidProjection(m_i));
    }
    let delta = drive.detuning(m_i);
    let envelope = |total: f64| match seq.envelope {
        CoherenceEnvelope::FreeInduction => stretched_decay(total, deco.t2_star, deco.ramsey_exponent),
        CoherenceEnvelope::Refocused => stretched_decay(total, deco.tau_c, deco.echo_exponent),
    };

    let mut bloch = [0.0, 0.0, 1.0];
    let mut free_clock = 0.0;
    let last = seq.elements.len() - 1;
    for (index, element) in seq.elements.iter().enumerate() {
        match *element {
            PulseElement::Laser { .. } => {
                if index != last {
                    bloch = [0.0, 0.0, 1.0];
                    free_clock = 0.0;
                }
            }
            PulseElement::Microwave { duration, f0, phase } => {
                let u = Su2::drive(duration, f0, phase, delta);
                bloch = apply(&u.bloch_rotation(), bloch);
                let fe = f0.hypot(delta);
                if fe > 0.0 {
                    let axis = [f0 * phase.cos() / fe, f0 * phase.sin() / fe, delta / fe];
                    bloch = damp_perpendicular(bloch, axis, exp_decay(duration, deco.t0));
                }
            }
            PulseElement::HardPulse { angle, phase } => {
                let u = Su2::rotation(angle, [phase.cos(), phase.sin(), 0.0]);
                bloch = apply(&u.bloch_rotation(), bloch);
            }
            PulseElement::FreeEvolution { duration } => {
                let u = Su2::drive(duration, 0.0, 0.0, delta);
                bloch = apply(&u.bloch_rotation(), bloch);
                let before = envelope(free_clock);
                free_clock += duration;
                let after = envelope(free_clock);
                let factor = if before > 0.0 { after / before } else { 0.0 };
                bloch = damp_perpendicular(bloch, [0.0, 0.0, 1.0], factor);
            }
        }
    }
    Ok((0.5 * (1.0 + bloch[2])).clamp(0.0, 1.0))
}

/// Unweighted mean of [`propagate_sequence`] over the three projections.
pub fn propagate_averaged(
    seq: &PulseSequence,
    drive: &DriveParams,
    deco: &DecoherenceParams,
) -> Result<f64, SequenceError> {
    let mut sum = 0.0;
    for &m in &PROJECTIONS {
        sum += propagate_sequence(seq, drive, deco, m)?;
    }
    Ok(sum / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rabi_population, ramsey_signal, ramsey_signal_stretched};

    #[test]
    fn resonant_pi_pulse_inverts() {
        let drive = DriveParams { f0: 4.2, delta_f: 0.0, alpha_n: 2.2, phase: 0.0 };
        let seq = PulseSequence::rabi(0.5 / 4.2, 4.2, 0.0);
        let p = propagate_sequence(&seq, &drive, &DecoherenceParams::none(), 0).unwrap();
        assert!(p.abs() < 1e-15);
    }

    #[test]
    fn rotation_is_unitary() {
        for k in 0..50 {
            let t = 0.037 * k as f64;
            let u = Su2::drive(t, 4.2, 0.3 * k as f64, 2.2 - 0.1 * k as f64);
            assert!(u.unitarity_defect() <= 1e-12);
        }
    }

    #[test]
    fn bloch_rotation_about_x() {
        let u = Su2::rotation(PI / 2.0, [1.0, 0.0, 0.0]);
        let v = apply(&u.bloch_rotation(), [0.0, 0.0, 1.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] + 1.0).abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn detuned_rabi_matches_population_formula() {
        let drive = DriveParams { f0: 3.0, delta_f: 1.7, alpha_n: 2.2, phase: 0.0 };
        let deco = DecoherenceParams { t0: 1.5, ..DecoherenceParams::none() };
        for k in 0..100 {
            let t = k as f64 * 0.031;
            let seq = PulseSequence::rabi(t, 3.0, 0.4);
            for m in [-1i8, 0, 1] {
                let p = propagate_sequence(&seq, &drive, &deco, m).unwrap();
                let expected = rabi_population(t, 3.0, drive.detuning(m), 1.5);
                assert!((p - expected).abs() < 1e-12, "t={t} m={m}");
            }
        }
    }

    #[test]
    fn ramsey_per_projection_matches_closed_form() {
        let drive = DriveParams { f0: 4.0, delta_f: -3.3, alpha_n: 2.2, phase: 0.0 };
        let deco = DecoherenceParams { t2_star: 2.3, ..DecoherenceParams::none() };
        for k in 0..100 {
            let t = k as f64 * 0.05;
            let seq = PulseSequence::ramsey(t);
            for m in [-1i8, 0, 1] {
                let p = propagate_sequence(&seq, &drive, &deco, m).unwrap();
                let single = ramsey_signal(t, drive.detuning(m), 0.0, 2.3);
                assert!((p - 0.5 * (1.0 + single)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_dephasing_averaged() {
        let drive = DriveParams { f0: 4.0, delta_f: -3.3, alpha_n: 2.2, phase: 0.0 };
        let deco = DecoherenceParams { t2_star: 2.3, ramsey_exponent: 2.0, ..DecoherenceParams::none() };
        for k in 0..100 {
            let t = k as f64 * 0.05;
            let p = propagate_averaged(&PulseSequence::ramsey(t), &drive, &deco).unwrap();
            let expected = 0.5 * (1.0 + ramsey_signal_stretched(t, -3.3, 2.2, 2.3, 2.0));
            assert!((p - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_detection() {
        assert_eq!(PulseSequence::ramsey(1.0).envelope, CoherenceEnvelope::FreeInduction);
        let echo = PulseSequence::new(PulseSequence::echo(1.0, 1.0).elements);
        assert_eq!(echo.envelope, CoherenceEnvelope::Refocused);
        assert_eq!(PulseSequence::rabi(1.0, 4.0, 0.0).envelope, CoherenceEnvelope::FreeInduction);
    }

    #[test]
    fn validation_errors() {
        let drive = DriveParams::default();
        let deco = DecoherenceParams::none();
        let no_readout = PulseSequence::new(vec![
            PulseElement::Laser { duration: 1.0 },
            PulseElement::FreeEvolution { duration: 1.0 },
        ]);
        assert_eq!(propagate_sequence(&no_readout, &drive, &deco, 0), Err(SequenceError::NoReadout));
        let no_pump = PulseSequence::new(vec![
            PulseElement::FreeEvolution { duration: 1.0 },
            PulseElement::Laser { duration: 1.0 },
        ]);
        assert_eq!(propagate_sequence(&no_pump, &drive, &deco, 0), Err(SequenceError::NoPolarization));
        let negative = PulseSequence::rabi(-1.0, 4.0, 0.0);
        assert!(matches!(
            propagate_sequence(&negative, &drive, &deco, 0),
            Err(SequenceError::InvalidDuration { index: 1, .. })
        ));
        let ok = PulseSequence::rabi(1.0, 4.0, 0.0);
        assert_eq!(propagate_sequence(&ok, &drive, &deco, 2), Err(SequenceError::InvalidProjection(2)));
        assert_eq!(
            propagate_sequence(&PulseSequence::new(vec![]), &drive, &deco, 0),
            Err(SequenceError::TooShort)
        );
    }

    #[test]
    fn mid_sequence_laser_repolarizes() {
        let drive = DriveParams::default();
        let seq = PulseSequence::new(vec![
            PulseElement::Laser { duration: 1.0 },
            PulseElement::Microwave { duration: 0.05, f0: 4.2, phase: 0.0 },
            PulseElement::Laser { duration: 1.0 },
            PulseElement::Laser { duration: 0.3 },
        ]);
        let p = propagate_averaged(&seq, &drive, &DecoherenceParams::none()).unwrap();
        assert_eq!(p, 1.0);
    }
}
