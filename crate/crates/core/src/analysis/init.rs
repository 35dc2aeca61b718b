//! Starting values for the fit families, derived from the data.

use serde::Serialize;

use super::fft::{find_peaks, fft_spectrum, uniform_step, Window};
use super::models::ModelKind;
use crate::dynamics::{rabi_average, DriveParams, DEFAULT_ALPHA_N};
use crate::measurement::Trace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitGuess {
    pub params: Vec<f64>,
    /// True when the data carried no usable frequency information and the
    /// documented defaults ([`ModelKind::fallback_params`]) were used.
    pub fallback: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares `offset + amplitude * basis` for fixed `basis`; returns
/// (amplitude, offset, sse).
fn linear_fit(basis: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let (sb, sy) = (basis.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sbb: f64 = basis.iter().map(|b| b * b).sum();
    let sby: f64 = basis.iter().zip(y).map(|(b, v)| b * v).sum();
    let det = n * sbb - sb * sb;
    if det.abs() < 1e-300 {
        return (0.0, sy / n, y.iter().map(|v| (v - sy / n).powi(2)).sum());
    }
    let a = (n * sby - sb * sy) / det;
    let c = (sy - a * sb) / n;
    let sse = basis.iter().zip(y).map(|(b, v)| (v - c - a * b).powi(2)).sum();
    (a, c, sse)
}

/// Decay constant from a log-linear fit of per-window maxima of
/// `|y - mean|`. Windows span `window` μs.
fn envelope_decay(x: &[f64], y: &[f64], window: f64, default: f64) -> f64 {
    let m = mean(y);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut start = 0;
    while start < x.len() {
        let mut end = start;
        let (mut best_t, mut best) = (x[start], 0.0f64);
        while end < x.len() && x[end] < x[start] + window {
            let v = (y[end] - m).abs();
            if v > best {
                best = v;
                best_t = x[end];
            }
            end += 1;
        }
        if best > 0.0 {
            pts.push((best_t, best.ln()));
        }
        start = end.max(start + 1);
    }
    if pts.len() < 3 {
        return default;
    }
    let n = pts.len() as f64;
    let st: f64 = pts.iter().map(|p| p.0).sum();
    let sl: f64 = pts.iter().map(|p| p.1).sum();
    let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let stl: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * stl - st * sl) / (n * stt - st * st);
    if slope < 0.0 && slope.is_finite() {
        (-1.0 / slope).clamp(0.05, 1e5)
    } else {
        default
    }
}

/// Initial TripleNutation parameters `[f0, t0, delta_f, alpha_n, amplitude,
/// offset]` with `delta_f = 0` and `alpha_n = 2.2`.
///
/// Each of the strongest FFT peaks `F` bounds the resonant frequency: at zero
/// detuning the spectrum holds `f0` and `sqrt(f0^2 + alpha^2)`, so `f0` is
/// searched on `[sqrt(F^2 - alpha^2), F]` (widened by one bin) by linear
/// least squares for amplitude and offset at each candidate. The candidate
/// with the lowest residual wins.
pub fn init_guess_rabi(trace: &Trace) -> InitGuess {
    init_guess_rabi_at(trace, 0.0, DEFAULT_ALPHA_N)
}

/// [`init_guess_rabi`] for an assumed detuning.
pub fn init_guess_rabi_at(trace: &Trace, delta_f: f64, alpha_n: f64) -> InitGuess {
    let kind = ModelKind::TripleNutation;
    let fallback = InitGuess {
        params: kind.fallback_params(),
        fallback: true,
    };
    let Ok(spec) = fft_spectrum(trace, Window::Hann, 8) else {
        return fallback;
    };
    let candidates: Vec<f64> = find_peaks(&spec, 0.5).iter().take(RABI_CANDIDATES).map(|p| p.freq).collect();
    if candidates.is_empty() {
        return fallback;
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for peak in candidates {
        let (params, sse) = rabi_search(trace, peak, spec.resolution, delta_f, alpha_n);
        if best.as_ref().is_none_or(|b| sse < b.1) {
            best = Some((params, sse));
        }
    }
    InitGuess {
        params: best.unwrap().0,
        fallback: false,
    }
}

/// Strongest spectral peaks tried as the nutation line.
const RABI_CANDIDATES: usize = 3;

/// Best `f0` below the spectral line at `peak` and the resulting SSE.
fn rabi_search(trace: &Trace, peak: f64, resolution: f64, delta_f: f64, alpha_n: f64) -> (Vec<f64>, f64) {
    let x = &trace.abscissa;
    let y = &trace.signal;
    let span = x[x.len() - 1] - x[0];
    let t0 = envelope_decay(x, y, 1.0 / peak.max(1e-3) * 2.0, 10.0 * span.max(0.1));

    // Largest per-projection detuning magnitude bounds how far f0 can sit
    // below the peak.
    let max_detuning = [-1.0, 0.0, 1.0]
        .iter()
        .map(|m| (delta_f - m * alpha_n).abs())
        .fold(0.0, f64::max);
    let hi = peak + resolution;
    let lo = ((peak * peak - max_detuning * max_detuning).max(0.0)).sqrt() - resolution;
    let lo = lo.max(1e-3);
    let evaluate = |f0: f64| {
        let drive = DriveParams { f0, delta_f, alpha_n, phase: 0.0 };
        let basis: Vec<f64> = x.iter().map(|&t| rabi_average(t, &drive, t0)).collect();
        linear_fit(&basis, y)
    };
    let steps = 400;
    let mut best = (lo, f64::INFINITY);
    for k in 0..=steps {
        let f0 = lo + (hi - lo) * k as f64 / steps as f64;
        let (_, _, sse) = evaluate(f0);
        if sse < best.1 {
            best = (f0, sse);
        }
    }
    // Golden-section polish within one grid cell.
    let cell = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best.0 - cell).max(1e-3), best.0 + cell);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if evaluate(c).2 < evaluate(d).2 {
            b = d;
        } else {
            a = c;
        }
    }
    let f0 = 0.5 * (a + b);
    let (amplitude, offset, sse) = evaluate(f0);
    (vec![f0, t0, delta_f, alpha_n, amplitude, offset], sse)
}

/// Initial RamseyFringes parameters `[delta_f, alpha_n, t2_star, amplitude,
/// offset, exponent]`, exponent 1. Three peaks give `|δ|` (middle) and `α` (half the outer span);
/// fewer fall back to the strongest peak and `α = 2.2`.
pub fn init_guess_ramsey(trace: &Trace) -> InitGuess {
    let kind = ModelKind::RamseyFringes;
    let Ok(spec) = fft_spectrum(trace, Window::Hann, 8) else {
        return InitGuess { params: kind.fallback_params(), fallback: true };
    };
    let peaks = find_peaks(&spec, 0.2);
    if peaks.is_empty() {
        return InitGuess { params: kind.fallback_params(), fallback: true };
    }
    let (delta, alpha) = if peaks.len() >= 3 {
        let mut f: Vec<f64> = peaks[..3].iter().map(|p| p.freq).collect();
        f.sort_by(f64::total_cmp);
        (f[1], 0.5 * (f[2] - f[0]))
    } else {
        (peaks[0].freq, DEFAULT_ALPHA_N)
    };
    let x = &trace.abscissa;
    let y = &trace.signal;
    let span = x[x.len() - 1] - x[0];
    let window = 1.0 / (delta - alpha).abs().max(0.2);
    let t2 = envelope_decay(x, y, window, span.max(0.1));
    let basis: Vec<f64> = x
        .iter()
        .map(|&t| crate::dynamics::ramsey_signal(t, delta, alpha, t2))
        .collect();
    let (amplitude, offset, _) = linear_fit(&basis, y);
    InitGuess {
        params: vec![delta, alpha.clamp(0.0, 20.0), t2, amplitude, offset, 1.0],
        fallback: false,
    }
}

/// Initial EchoEnvelope parameters `[tau_c, exponent, amplitude, offset]`
/// from a log-linear fit against the tail value.
pub fn init_guess_echo(trace: &Trace) -> InitGuess {
    let x = &trace.abscissa;
    let y = &trace.signal;
    let n = y.len();
    if n < 4 {
        return InitGuess {
            params: ModelKind::EchoEnvelope.fallback_params(),
            fallback: true,
        };
    }
    let tail = mean(&y[n - n / 8 - 1..]);
    let head = y[0];
    let amp = head - tail;
    let mut pts = Vec::new();
    for i in 0..n {
        let r = (y[i] - tail) / amp;
        if r > 0.1 && r < 0.95 {
            pts.push((x[i], r.ln()));
        }
    }
    let tau = if pts.len() >= 2 {
        let num: f64 = pts.iter().map(|(t, l)| t * l).sum();
        let den: f64 = pts.iter().map(|(t, _)| t * t).sum();
        let slope = num / den;
        if slope < 0.0 { (-1.0 / slope).clamp(1e-3, 1e6) } else { 4.0 }
    } else {
        let span = x[n - 1] - x[0];
        span.max(1e-3)
    };
    InitGuess {
        params: vec![tau, 1.0, amp, tail],
        fallback: pts.len() < 2,
    }
}

/// Initial TripleLorentzian parameters from the three deepest local
/// minima.
pub fn init_guess_lorentzian(trace: &Trace) -> InitGuess {
    let x = &trace.abscissa;
    let y = &trace.signal;
    let n = y.len();
    let baseline = {
        let mut s = y.clone();
        s.sort_by(f64::total_cmp);
        s[(3 * n) / 4]
    };
    let mut minima: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| y[i] < y[i - 1] && y[i] <= y[i + 1])
        .collect();
    minima.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    if minima.len() < 3 {
        return InitGuess {
            params: ModelKind::TripleLorentzian.fallback_params(),
            fallback: true,
        };
    }
    let mut picks: Vec<usize> = minima[..3].to_vec();
    picks.sort_unstable();
    let spacing = 0.5 * (x[picks[2]] - x[picks[0]]);
    let width = (0.4 * spacing).max(1e-3);
    let mut params = Vec::with_capacity(10);
    params.extend(picks.iter().map(|&i| x[i]));
    params.extend([width; 3]);
    params.extend(picks.iter().map(|&i| (baseline - y[i]).max(0.0)));
    params.push(baseline);
    InitGuess { params, fallback: false }
}

/// Dispatches to the family's initializer.
pub fn init_guess(kind: ModelKind, trace: &Trace) -> InitGuess {
    if uniform_step(&trace.abscissa).is_err() && kind != ModelKind::TripleLorentzian {
        return InitGuess { params: kind.fallback_params(), fallback: true };
    }
    match kind {
        ModelKind::TripleNutation => init_guess_rabi(trace),
        ModelKind::TripleLorentzian => init_guess_lorentzian(trace),
        ModelKind::RamseyFringes => init_guess_ramsey(trace),
        ModelKind::EchoEnvelope => init_guess_echo(trace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rabi_average_population;

    fn rabi_trace(f0: f64, delta_f: f64, t0: f64) -> Trace {
        let drive = DriveParams { f0, delta_f, alpha_n: 2.2, phase: 0.0 };
        let x: Vec<f64> = (0..141).map(|i| i as f64 * 0.025).collect();
        let y = x.iter().map(|&t| rabi_average_population(t, &drive, t0)).collect();
        Trace::exact(x, y).unwrap()
    }

    #[test]
    fn f0_guess_close_for_typical_drives() {
        for f0 in [4.2, 6.2, 8.4] {
            let g = init_guess_rabi(&rabi_trace(f0, 0.0, 2.0));
            assert!(!g.fallback);
            assert!((g.params[0] - f0).abs() < 0.2, "f0={f0} guess {}", g.params[0]);
        }
    }

    #[test]
    fn constant_trace_falls_back() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.025).collect();
        let t = Trace::exact(x, vec![0.02; 50]).unwrap();
        let g = init_guess_rabi(&t);
        assert!(g.fallback);
        assert_eq!(g.params, ModelKind::TripleNutation.fallback_params());
    }

    #[test]
    fn linear_fit_exact() {
        let b = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, c, sse) = linear_fit(&b, &y);
        assert!((a - 2.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12 && sse < 1e-20);
    }
}
