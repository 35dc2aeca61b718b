//! Frequency-domain analysis and least-squares fitting.

pub mod fft;
pub mod fit;
pub mod init;
pub mod models;

use thiserror::Error;

pub use fft::{fft_spectrum, find_peaks, Peak, Spectrum, Window};
pub use fit::{fit, FitResult};
pub use init::{init_guess, init_guess_rabi, InitGuess};
pub use models::{FitModel, ModelKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-uniform sampling at index {index}")]
    NonUniformSampling { index: usize },
    #[error("invalid option `{name}`: {value}")]
    InvalidOption { name: &'static str, value: f64 },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("bounds for `{name}` are invalid: [{lower}, {upper}]")]
    InvalidBounds {
        name: &'static str,
        lower: f64,
        upper: f64,
    },
    #[error("initial value of `{name}` ({value}) lies outside its bounds")]
    InitOutOfBounds { name: &'static str, value: f64 },
    #[error("model has no free parameters")]
    NoFreeParameters,
    #[error("trace sigma must be all positive or all zero")]
    MixedSigma,
    #[error("normal matrix is singular (parameter `{name}` is not constrained by the data)")]
    SingularNormalMatrix { name: &'static str },
}
