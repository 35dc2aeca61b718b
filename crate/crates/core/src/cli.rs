//! The `levels`, `simulate` and `analyze` commands as library functions.
//! The binary only parses arguments and maps errors to exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::fft::uniform_step;
use crate::analysis::init::{init_guess, init_guess_rabi_at};
use crate::analysis::{fft_spectrum, find_peaks, fit, AnalysisError, FitModel, FitResult, ModelKind, Peak, Spectrum};
use crate::config::{AnalyzeConfig, AnalyzeMode, ConfigError, ExperimentConfig, ExperimentKind, PulseMode, Variant};
use crate::dynamics::DriveParams;
use crate::eigen::EigenError;
use crate::measurement::{esr_spectrum, noiseless_trace, sample_trace, MeasurementError, Trace, TraceMeta};
use crate::plot::{line_plot, Series};
use crate::sequence::{propagate_averaged, PulseSequence, SequenceError};
use crate::spin::{build_hamiltonian, diagonalize, transition_triplet, Branch, HyperfineLevels, SpinError, SpinSystemParams, TransitionTriplet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        source: MeasurementError,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("fit did not converge after {iterations} iterations (sse {sse})")]
    NotConverged { iterations: usize, sse: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spin(SpinError::Eigen(_) | SpinError::AmbiguousLabel { .. } | SpinError::DuplicateLabel { .. })
            | CliError::Config(ConfigError::Spin(SpinError::Eigen(_)))
            | CliError::Measurement(MeasurementError::Spin(SpinError::Eigen(_)))
            | CliError::Analysis(AnalysisError::SingularNormalMatrix { .. })
            | CliError::NotConverged { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

impl From<EigenError> for CliError {
    fn from(e: EigenError) -> Self {
        CliError::Spin(SpinError::Eigen(e))
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub noiseless: bool,
    pub strict: bool,
    pub svg: bool,
}

impl RunOptions {
    pub fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg.noiseless |= self.noiseless;
        cfg.output.svg |= self.svg;
        cfg
    }
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- levels

#[derive(Debug, Clone, Serialize)]
pub struct LevelsReport {
    pub spin: SpinSystemParams,
    pub levels: HyperfineLevels,
    pub triplets: Vec<TransitionTriplet>,
    /// Difference of the m_s = +1 and -1 triplet centers, MHz.
    pub branch_splitting: f64,
}

pub fn compute_levels(spin: &SpinSystemParams) -> Result<LevelsReport, CliError> {
    let levels = diagonalize(&build_hamiltonian(spin)?)?;
    let plus = transition_triplet(&levels, Branch::Plus)?;
    let minus = transition_triplet(&levels, Branch::Minus)?;
    Ok(LevelsReport {
        spin: *spin,
        branch_splitting: plus.center - minus.center,
        triplets: vec![plus, minus],
        levels,
    })
}

pub fn levels_csv(report: &LevelsReport) -> String {
    let mut out = String::from("level,energy_mhz,m_s,m_i,overlap\n");
    for k in 0..report.levels.energies.len() {
        let l = report.levels.labels[k];
        out.push_str(&format!(
            "{k},{},{},{},{}\n",
            report.levels.energies[k], l.m_s, l.m_i, report.levels.basis_overlap[k]
        ));
    }
    out
}

pub fn cmd_levels(cfg: ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let cfg = opts.apply(cfg).resolve()?;
    let report = compute_levels(&cfg.spin)?;
    let dir = &cfg.output.dir;
    let prefix = cfg.prefix();
    let mut written = vec![
        write_file(&dir.join(format!("{prefix}.csv")), &levels_csv(&report))?,
        write_file(&dir.join(format!("{prefix}.json")), &to_json(&report))?,
    ];
    if cfg.output.svg {
        let x: Vec<f64> = (0..9).map(f64::from).collect();
        let svg = line_plot(
            "hyperfine levels",
            "level index",
            "energy (MHz)",
            &[Series { label: "E", x: &x, y: &report.levels.energies }],
        );
        written.push(write_file(&dir.join(format!("{prefix}.svg")), &svg)?);
    }
    Ok(written)
}

// -------------------------------------------------------------- simulate

fn sequence_at(cfg: &ExperimentConfig, drive: &DriveParams, x: f64) -> PulseSequence {
    match (cfg.experiment, cfg.pulses) {
        (ExperimentKind::Ramsey, PulseMode::Hard) => PulseSequence::ramsey(x),
        (ExperimentKind::Ramsey, PulseMode::Finite) => PulseSequence::ramsey_finite(x, drive.f0),
        (ExperimentKind::Echo, mode) => {
            let (tau, tau_prime) = match cfg.echo.tau {
                Some(tau) => (tau, x),
                None => (0.5 * x, 0.5 * x),
            };
            match mode {
                PulseMode::Hard => PulseSequence::echo(tau, tau_prime),
                PulseMode::Finite => PulseSequence::echo_finite(tau, tau_prime, drive.f0),
            }
        }
        _ => PulseSequence::rabi(x, drive.f0, drive.phase),
    }
}

/// Projection-averaged m_s = 0 population at every grid point. Points are
/// evaluated in parallel; the result does not depend on scheduling.
pub fn populations(cfg: &ExperimentConfig, drive: &DriveParams, grid: &[f64]) -> Result<Vec<f64>, CliError> {
    if cfg.pulses == PulseMode::Finite && drive.f0 <= 0.0 && cfg.experiment != ExperimentKind::Rabi {
        return Err(CliError::Usage("finite pulses need drive.f0 > 0".into()));
    }
    grid.par_iter()
        .map(|&x| propagate_averaged(&sequence_at(cfg, drive, x), drive, &cfg.decoherence))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::from)
}

fn abscissa_unit(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Esr => "MHz",
        _ => "us",
    }
}

/// One simulated trace for `drive`. `seed = None` gives the noiseless trace.
pub fn simulate_trace(cfg: &ExperimentConfig, drive: &DriveParams, seed: Option<u64>) -> Result<Trace, CliError> {
    if cfg.experiment == ExperimentKind::Esr {
        return Ok(esr_spectrum(&cfg.spin, &cfg.esr, &cfg.readout, seed)?);
    }
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or(ConfigError::MissingSweep(cfg.experiment.name()))?
        .points();
    let pops = populations(cfg, drive, &grid)?;
    let meta = TraceMeta {
        kind: cfg.experiment.name().to_string(),
        abscissa_unit: abscissa_unit(cfg.experiment).to_string(),
        seed,
        noiseless: seed.is_none(),
        params: serde_json::json!({
            "drive": drive,
            "decoherence": cfg.decoherence,
            "readout": cfg.readout,
            "pulses": cfg.pulses,
            "echo": cfg.echo,
        }),
    };
    Ok(match seed {
        Some(seed) => sample_trace(&grid, &pops, &cfg.readout, seed, meta)?,
        None => noiseless_trace(&grid, &pops, &cfg.readout, meta)?,
    })
}

/// Labeled drives to simulate: the variants, or the base drive alone.
pub fn runs(cfg: &ExperimentConfig) -> Vec<(Option<String>, DriveParams, u64)> {
    if cfg.variants.is_empty() {
        return vec![(None, cfg.drive, cfg.seed)];
    }
    cfg.variants
        .iter()
        .enumerate()
        .map(|(i, v): (usize, &Variant)| (Some(v.label.clone()), cfg.drive_for(v), cfg.seed.wrapping_add(i as u64)))
        .collect()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    meta: &'a TraceMeta,
    n_points: usize,
    config: &'a ExperimentConfig,
}

pub fn cmd_simulate(cfg: ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let cfg = opts.apply(cfg).resolve()?;
    if cfg.experiment == ExperimentKind::Levels {
        return cmd_levels(cfg, &RunOptions::default());
    }
    let prefix = cfg.prefix();
    let mut written = Vec::new();
    let mut traces = Vec::new();
    for (label, drive, seed) in runs(&cfg) {
        let trace = simulate_trace(&cfg, &drive, (!cfg.noiseless).then_some(seed))?;
        let stem_name = match &label {
            Some(l) => format!("{prefix}_{l}"),
            None => prefix.clone(),
        };
        let dir = &cfg.output.dir;
        written.push(write_file(&dir.join(format!("{stem_name}.csv")), &trace.to_csv())?);
        let sidecar = Sidecar {
            meta: &trace.meta,
            n_points: trace.len(),
            config: &cfg,
        };
        written.push(write_file(&dir.join(format!("{stem_name}.json")), &to_json(&sidecar))?);
        traces.push((label.unwrap_or_else(|| prefix.clone()), stem_name, trace));
    }
    if cfg.output.svg {
        let series: Vec<Series<'_>> = traces
            .iter()
            .map(|(label, _, t)| Series { label, x: &t.abscissa, y: &t.signal })
            .collect();
        let x_label = format!("{} ({})", cfg.experiment.name(), abscissa_unit(cfg.experiment));
        let svg = line_plot(&prefix, &x_label, "photons per readout", &series);
        written.push(write_file(&cfg.output.dir.join(format!("{prefix}.svg")), &svg)?);
    }
    if let Some(acfg) = &cfg.analyze {
        let mut spectra = Vec::new();
        for (label, stem_name, trace) in &traces {
            let output = analyze_trace(trace, acfg, Some(cfg.experiment))?;
            written.extend(write_analysis(&output, &cfg.output.dir, stem_name, opts.strict)?);
            if let AnalysisOutput::Spectrum { spectrum, .. } = output {
                spectra.push((label.clone(), spectrum));
            }
        }
        if cfg.output.svg && !spectra.is_empty() {
            let series: Vec<Series<'_>> = spectra
                .iter()
                .map(|(label, s)| Series { label, x: &s.freqs, y: &s.amps })
                .collect();
            let svg = line_plot(&format!("{prefix} FFT"), "frequency (MHz)", "amplitude", &series);
            written.push(write_file(&cfg.output.dir.join(format!("{prefix}_fft.svg")), &svg)?);
        }
    }
    Ok(written)
}

// --------------------------------------------------------------- analyze

#[derive(Debug, Clone, Serialize)]
pub struct ParameterReport {
    pub name: &'static str,
    pub value: f64,
    /// `None` when the data leave the parameter unconstrained.
    pub stderr: Option<f64>,
    pub free: bool,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub init: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    pub delta_f: Option<f64>,
    pub sse: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub parameters: Vec<ParameterReport>,
    pub sse: f64,
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub iterations: usize,
    pub weighted: bool,
    pub n_points: usize,
    pub init_fallback: bool,
    pub starts: Vec<StartReport>,
    #[serde(skip)]
    pub result: FitResult,
}

impl FitReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).and_then(|p| p.stderr)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakReport {
    pub resolution: f64,
    pub peaks: Vec<Peak>,
}

#[derive(Debug, Clone)]
pub enum AnalysisOutput {
    Spectrum { spectrum: Spectrum, peaks: Vec<Peak> },
    Fit(FitReport),
}

pub fn default_model(kind: ExperimentKind) -> Option<ModelKind> {
    match kind {
        ExperimentKind::Rabi => Some(ModelKind::TripleNutation),
        ExperimentKind::Ramsey => Some(ModelKind::RamseyFringes),
        ExperimentKind::Echo => Some(ModelKind::EchoEnvelope),
        ExperimentKind::Esr => Some(ModelKind::TripleLorentzian),
        ExperimentKind::Levels => None,
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn build_model(kind: ModelKind, cfg: &AnalyzeConfig) -> Result<FitModel, CliError> {
    let mut model = FitModel::new(kind);
    for (name, &free) in &cfg.free {
        model = model.set_free(name, free)?;
    }
    for (name, &[lo, hi]) in &cfg.bounds {
        model = model.set_bounds(name, lo, hi)?;
    }
    model.validate()?;
    for name in cfg.init.keys() {
        if kind.index_of(name).is_none() {
            return Err(AnalysisError::UnknownParameter(name.clone()).into());
        }
    }
    Ok(model)
}

/// Data-derived starting point with user-supplied values layered on top.
fn starting_point(model: &FitModel, trace: &Trace, cfg: &AnalyzeConfig, delta: Option<f64>) -> (Vec<f64>, bool) {
    let kind = model.kind;
    let mut guess = match (kind, delta) {
        (ModelKind::TripleNutation, Some(d)) => {
            let alpha = cfg.init.get("alpha_n").copied().unwrap_or(crate::dynamics::DEFAULT_ALPHA_N);
            init_guess_rabi_at(trace, d, alpha)
        }
        _ => init_guess(kind, trace),
    };
    model.project(&mut guess.params);
    for (name, &v) in &cfg.init {
        if let Some(i) = kind.index_of(name) {
            guess.params[i] = v;
        }
    }
    if let Some(d) = delta {
        guess.params[2] = d;
    }
    (guess.params, guess.fallback)
}

/// Fits `trace` per `cfg`, running every configured start and keeping the
/// lowest SSE.
pub fn fit_trace(trace: &Trace, cfg: &AnalyzeConfig, kind: ModelKind) -> Result<FitReport, CliError> {
    let model = build_model(kind, cfg)?;
    let deltas: Vec<Option<f64>> = if kind == ModelKind::TripleNutation {
        if cfg.multistart_delta.is_empty() {
            vec![Some(cfg.init.get("delta_f").copied().unwrap_or(0.0))]
        } else {
            cfg.multistart_delta.iter().map(|&d| Some(d)).collect()
        }
    } else {
        vec![None]
    };
    let mut starts = Vec::new();
    let mut best: Option<(FitResult, Vec<f64>, bool)> = None;
    let mut first_error = None;
    for delta in deltas {
        let (init, fallback) = starting_point(&model, trace, cfg, delta);
        match fit(&model, trace, &init) {
            Ok(r) => {
                starts.push(StartReport {
                    delta_f: delta,
                    sse: Some(r.sse),
                    converged: r.converged,
                    error: None,
                });
                if best.as_ref().is_none_or(|(b, _, _)| r.sse < b.sse) {
                    best = Some((r, init, fallback));
                }
            }
            Err(e) => {
                starts.push(StartReport {
                    delta_f: delta,
                    sse: None,
                    converged: false,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((result, init, init_fallback)) = best else {
        return Err(first_error.expect("at least one start").into());
    };
    let names = kind.param_names();
    let parameters = (0..names.len())
        .map(|i| ParameterReport {
            name: names[i],
            value: result.params[i],
            stderr: finite(result.stderr[i]),
            free: model.free[i],
            lower: finite(model.lower[i]),
            upper: finite(model.upper[i]),
            init: init[i],
        })
        .collect();
    Ok(FitReport {
        model: kind,
        parameters,
        sse: result.sse,
        reduced_chi_square: result.reduced_chi_square(trace.len(), model.n_free()),
        converged: result.converged,
        iterations: result.iterations,
        weighted: result.weighted,
        n_points: trace.len(),
        init_fallback,
        starts,
        result,
    })
}

pub fn analyze_trace(
    trace: &Trace,
    cfg: &AnalyzeConfig,
    experiment: Option<ExperimentKind>,
) -> Result<AnalysisOutput, CliError> {
    match cfg.mode {
        AnalyzeMode::Fft => {
            let spectrum = fft_spectrum(trace, cfg.window, cfg.zero_pad_factor)?;
            let peaks = find_peaks(&spectrum, cfg.peak_threshold);
            Ok(AnalysisOutput::Spectrum { spectrum, peaks })
        }
        AnalyzeMode::Fit => {
            let kind = cfg
                .model
                .or_else(|| experiment.and_then(default_model))
                .ok_or_else(|| CliError::Usage("no fit model given and none implied by the trace".into()))?;
            if kind != ModelKind::TripleLorentzian {
                uniform_step(&trace.abscissa)?;
            }
            Ok(AnalysisOutput::Fit(fit_trace(trace, cfg, kind)?))
        }
    }
}

/// Writes `<stem>_fft.csv` + `<stem>_peaks.json`, or `<stem>_fit.json`.
/// With `strict`, a non-converged fit is an error after the file is written.
pub fn write_analysis(output: &AnalysisOutput, dir: &Path, stem: &str, strict: bool) -> Result<Vec<PathBuf>, CliError> {
    match output {
        AnalysisOutput::Spectrum { spectrum, peaks } => Ok(vec![
            write_file(&dir.join(format!("{stem}_fft.csv")), &spectrum.to_csv())?,
            write_file(
                &dir.join(format!("{stem}_peaks.json")),
                &to_json(&PeakReport {
                    resolution: spectrum.resolution,
                    peaks: peaks.clone(),
                }),
            )?,
        ]),
        AnalysisOutput::Fit(report) => {
            let path = write_file(&dir.join(format!("{stem}_fit.json")), &to_json(report))?;
            if strict && !report.converged {
                return Err(CliError::NotConverged {
                    iterations: report.iterations,
                    sse: report.sse,
                });
            }
            Ok(vec![path])
        }
    }
}

pub fn read_trace(path: &Path) -> Result<Trace, CliError> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut trace = Trace::from_csv(std::io::BufReader::new(file)).map_err(|source| CliError::Trace {
        path: path.to_path_buf(),
        source,
    })?;
    // Pick up the experiment kind from a sidecar written by `simulate`.
    if let Ok(text) = std::fs::read_to_string(path.with_extension("json")) {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
            if let Some(kind) = value.pointer("/meta/kind").and_then(|k| k.as_str()) {
                trace.meta.kind = kind.to_string();
            }
        }
    }
    Ok(trace)
}

fn kind_from_meta(trace: &Trace) -> Option<ExperimentKind> {
    serde_json::from_value(serde_json::Value::String(trace.meta.kind.clone())).ok()
}

pub fn cmd_analyze(
    trace_path: &Path,
    cfg: &AnalyzeConfig,
    out_dir: &Path,
    prefix: Option<&str>,
    strict: bool,
) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let trace = read_trace(trace_path)?;
    let output = analyze_trace(&trace, cfg, kind_from_meta(&trace))?;
    let stem = match prefix {
        Some(p) => p.to_string(),
        None => trace_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".into()),
    };
    write_analysis(&output, out_dir, &stem, strict)
}

/// Parses `name=value` pairs.
pub fn parse_assignments(items: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected name=value, got `{item}`")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("`{value}` is not a number in `{item}`")))?;
        out.insert(name.trim().to_string(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SweepGrid;

    fn rabi_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ExperimentKind::Rabi);
        c.sweep = Some(SweepGrid { start: 0.0, stop: 3.5, step: 0.025 });
        c
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(
            CliError::NotConverged { iterations: 500, sse: 1.0 }.exit_code(),
            EXIT_NUMERICAL
        );
        assert_eq!(
            CliError::Analysis(AnalysisError::SingularNormalMatrix { name: "f0" }).exit_code(),
            EXIT_NUMERICAL
        );
    }

    #[test]
    fn variants_get_distinct_seeds() {
        let mut c = rabi_config();
        c.seed = 10;
        c.variants = vec![
            Variant { label: "a".into(), f0: Some(8.4), delta_f: None },
            Variant { label: "b".into(), f0: None, delta_f: Some(1.1) },
        ];
        let r = runs(&c);
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].1.f0, r[0].2), (8.4, 10));
        assert_eq!((r[1].1.delta_f, r[1].1.f0, r[1].2), (1.1, 4.2, 11));
    }

    #[test]
    fn assignments_parse() {
        let m = parse_assignments(&["f0=4.2".into(), " t0 = 2".into()]).unwrap();
        assert_eq!(m["f0"], 4.2);
        assert_eq!(m["t0"], 2.0);
        assert!(parse_assignments(&["f0".into()]).is_err());
        assert!(parse_assignments(&["f0=x".into()]).is_err());
    }

    #[test]
    fn unknown_init_name_rejected() {
        let trace = simulate_trace(&rabi_config(), &DriveParams::default(), None).unwrap();
        let mut cfg = AnalyzeConfig { mode: AnalyzeMode::Fit, ..Default::default() };
        cfg.init.insert("omega".into(), 1.0);
        let err = analyze_trace(&trace, &cfg, Some(ExperimentKind::Rabi)).unwrap_err();
        assert!(matches!(err, CliError::Analysis(AnalysisError::UnknownParameter(_))));
    }
}
