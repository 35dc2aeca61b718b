use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dynamics::{echo_envelope, rabi_average, ramsey_signal_stretched, DriveParams, DEFAULT_ALPHA_N};
use crate::measurement::lorentzian;

/// Model families fitted to traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `offset + amplitude * rabi_average(t; f0, t0, delta_f, alpha_n)`
    TripleNutation,
    /// `baseline - Σ_k depth_k L(f; center_k, width_k)`
    TripleLorentzian,
    /// `offset + amplitude * ramsey_signal(t; delta_f, alpha_n, t2_star)`
    RamseyFringes,
    /// `offset + amplitude * exp(-(t / tau_c)^exponent)`
    EchoEnvelope,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::TripleNutation,
        ModelKind::TripleLorentzian,
        ModelKind::RamseyFringes,
        ModelKind::EchoEnvelope,
    ];

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::TripleNutation => &["f0", "t0", "delta_f", "alpha_n", "amplitude", "offset"],
            ModelKind::TripleLorentzian => &[
                "center_1", "center_2", "center_3", "width_1", "width_2", "width_3", "depth_1",
                "depth_2", "depth_3", "baseline",
            ],
            ModelKind::RamseyFringes => &["delta_f", "alpha_n", "t2_star", "amplitude", "offset", "exponent"],
            ModelKind::EchoEnvelope => &["tau_c", "exponent", "amplitude", "offset"],
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    pub fn index_of(self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|&n| n == name)
    }

    pub fn eval(self, x: f64, p: &[f64]) -> f64 {
        match self {
            ModelKind::TripleNutation => {
                let drive = DriveParams {
                    f0: p[0],
                    delta_f: p[2],
                    alpha_n: p[3],
                    phase: 0.0,
                };
                p[5] + p[4] * rabi_average(x, &drive, p[1])
            }
            ModelKind::TripleLorentzian => {
                let dips: f64 = (0..3).map(|k| p[6 + k] * lorentzian(x, p[k], p[3 + k])).sum();
                p[9] - dips
            }
            ModelKind::RamseyFringes => p[4] + p[3] * ramsey_signal_stretched(x, p[0], p[1], p[2], p[5]),
            ModelKind::EchoEnvelope => p[3] + p[2] * echo_envelope(x, p[0], p[1]),
        }
    }

    fn default_free(self) -> Vec<bool> {
        match self {
            // alpha_N is treated as known.
            ModelKind::TripleNutation => vec![true, true, true, false, true, true],
            ModelKind::TripleLorentzian => vec![true; 10],
            // Exponential dephasing unless the exponent is freed.
            ModelKind::RamseyFringes => vec![true, true, true, true, true, false],
            // Plain exponential envelope unless the exponent is freed.
            ModelKind::EchoEnvelope => vec![true, false, true, true],
        }
    }

    fn default_bounds(self) -> (Vec<f64>, Vec<f64>) {
        const INF: f64 = f64::INFINITY;
        match self {
            ModelKind::TripleNutation => (
                vec![0.0, 1e-3, -50.0, 0.0, -INF, -INF],
                vec![100.0, 1e6, 50.0, 20.0, INF, INF],
            ),
            ModelKind::TripleLorentzian => (
                vec![-INF, -INF, -INF, 1e-6, 1e-6, 1e-6, -INF, -INF, -INF, -INF],
                vec![INF; 10],
            ),
            ModelKind::RamseyFringes => (
                vec![-50.0, 0.0, 1e-3, -INF, -INF, 0.1],
                vec![50.0, 20.0, 1e6, INF, INF, 10.0],
            ),
            ModelKind::EchoEnvelope => (vec![1e-3, 0.1, -INF, -INF], vec![1e6, 10.0, INF, INF]),
        }
    }

    /// Parameter values used when nothing else is known.
    pub fn fallback_params(self) -> Vec<f64> {
        match self {
            ModelKind::TripleNutation => vec![4.0, 2.0, 0.0, DEFAULT_ALPHA_N, 1.0, 0.0],
            ModelKind::TripleLorentzian => vec![-2.2, 0.0, 2.2, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 1.0],
            ModelKind::RamseyFringes => vec![3.3, DEFAULT_ALPHA_N, 2.0, 1.0, 0.0, 1.0],
            ModelKind::EchoEnvelope => vec![4.0, 1.0, 1.0, 0.0],
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "triple_nutation" | "rabi" => Ok(ModelKind::TripleNutation),
            "triple_lorentzian" | "esr" => Ok(ModelKind::TripleLorentzian),
            "ramsey_fringes" | "ramsey" => Ok(ModelKind::RamseyFringes),
            "echo_envelope" | "echo" => Ok(ModelKind::EchoEnvelope),
            _ => Err(AnalysisError::UnknownModel(s.to_string())),
        }
    }
}

/// A model family together with its free/fixed flags and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub kind: ModelKind,
    pub free: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FitModel {
    pub fn new(kind: ModelKind) -> Self {
        let (lower, upper) = kind.default_bounds();
        Self {
            kind,
            free: kind.default_free(),
            lower,
            upper,
        }
    }

    pub fn set_free(mut self, name: &str, free: bool) -> Result<Self, AnalysisError> {
        let i = self
            .kind
            .index_of(name)
            .ok_or_else(|| AnalysisError::UnknownParameter(name.to_string()))?;
        self.free[i] = free;
        Ok(self)
    }

    pub fn set_bounds(mut self, name: &str, lower: f64, upper: f64) -> Result<Self, AnalysisError> {
        let i = self
            .kind
            .index_of(name)
            .ok_or_else(|| AnalysisError::UnknownParameter(name.to_string()))?;
        self.lower[i] = lower;
        self.upper[i] = upper;
        Ok(self)
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let n = self.kind.n_params();
        if self.free.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(AnalysisError::ParameterCount {
                expected: n,
                got: self.free.len().min(self.lower.len()).min(self.upper.len()),
            });
        }
        for i in 0..n {
            if self.lower[i].is_nan() || self.upper[i].is_nan() || self.lower[i] > self.upper[i] {
                return Err(AnalysisError::InvalidBounds {
                    name: self.kind.param_names()[i],
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        if self.n_free() == 0 {
            return Err(AnalysisError::NoFreeParameters);
        }
        Ok(())
    }

    pub fn project(&self, p: &mut [f64]) {
        for i in 0..p.len() {
            p[i] = p[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn eval(&self, x: f64, p: &[f64]) -> f64 {
        self.kind.eval(x, p)
    }

    /// Central-difference derivative of the model at `x` with respect to
    /// every free parameter (zero for fixed ones). `scale` multiplies the
    /// default step, used to cross-check the derivative.
    pub fn gradient(&self, x: f64, p: &[f64], scale: f64, out: &mut [f64]) {
        let mut work = p.to_vec();
        for i in 0..p.len() {
            if !self.free[i] {
                out[i] = 0.0;
                continue;
            }
            let h = scale * fd_step(p[i]);
            work[i] = p[i] + h;
            let up = self.eval(x, &work);
            work[i] = p[i] - h;
            let down = self.eval(x, &work);
            work[i] = p[i];
            out[i] = (up - down) / (2.0 * h);
        }
    }
}

/// Finite-difference step: `max(1e-6 |p|, 1e-8)`.
pub fn fd_step(p: f64) -> f64 {
    (1e-6 * p.abs()).max(1e-8)
}
