//! Pulsed spin-resonance simulation for a single NV center coupled to its
//! host 14N nucleus: hyperfine levels, Rabi/Ramsey/echo dynamics, ESR
//! spectra, shot-noise readout, FFT and least-squares analysis.

pub mod analysis;
pub mod dynamics;
pub mod eigen;
pub mod measurement;
pub mod sequence;
pub mod spin;
pub mod cli;
pub mod config;
pub mod plot;
