use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nvspin::analysis::{ModelKind, Window};
use nvspin::cli::{self, CliError, RunOptions};
use nvspin::config::{AnalyzeConfig, AnalyzeMode, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nvspin", version, about = "NV-center pulsed spin resonance: simulate, analyze, fit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment recipe (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the recipe's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the recipe).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip shot-noise sampling.
    #[arg(long)]
    noiseless: bool,
    /// Treat fit non-convergence as an error (exit code 2).
    #[arg(long)]
    strict: bool,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: bool,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            out: self.out.clone(),
            noiseless: self.noiseless,
            strict: self.strict,
            svg: self.svg,
        }
    }

    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
        Ok(ExperimentConfig::load(path)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Hyperfine level table and transition triplets.
    Levels(Common),
    /// Simulate the recipe's experiment and write trace CSV + JSON.
    Simulate(Common),
    /// FFT or fit a trace CSV.
    Analyze {
        /// Trace CSV (`abscissa,signal,sigma`).
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "fft")]
        mode: Mode,
        /// triple_nutation | triple_lorentzian | ramsey_fringes | echo_envelope
        /// (aliases rabi, esr, ramsey, echo). Default: implied by the trace.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum, default_value = "hann")]
        window: WindowArg,
        #[arg(long, default_value_t = 8)]
        zero_pad: usize,
        /// Relative peak threshold.
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        /// Free a parameter that is fixed by default (repeatable).
        #[arg(long = "free", value_name = "NAME")]
        free: Vec<String>,
        /// Fix a parameter (repeatable).
        #[arg(long = "fix", value_name = "NAME")]
        fix: Vec<String>,
        /// Initial value, `name=value` (repeatable).
        #[arg(long = "init", value_name = "NAME=VALUE")]
        init: Vec<String>,
        /// Comma-separated starting detunings for nutation fits.
        #[arg(long, value_delimiter = ',')]
        multistart_delta: Vec<f64>,
        /// Output file stem (default: trace file stem).
        #[arg(long)]
        prefix: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Fft,
    Fit,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WindowArg {
    None,
    Hann,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Levels(common) => cli::cmd_levels(common.load()?, &common.options()),
        Command::Simulate(common) => cli::cmd_simulate(common.load()?, &common.options()),
        Command::Analyze {
            trace,
            mode,
            model,
            window,
            zero_pad,
            threshold,
            free,
            fix,
            init,
            multistart_delta,
            prefix,
            common,
        } => {
            // A recipe's analyze block supplies defaults; flags given on the
            // command line replace them.
            let mut cfg = match &common.config {
                Some(_) => common.load()?.analyze.unwrap_or_default(),
                None => AnalyzeConfig::default(),
            };
            cfg.mode = match mode {
                Mode::Fft => AnalyzeMode::Fft,
                Mode::Fit => AnalyzeMode::Fit,
            };
            cfg.window = match window {
                WindowArg::None => Window::None,
                WindowArg::Hann => Window::Hann,
            };
            cfg.zero_pad_factor = zero_pad;
            cfg.peak_threshold = threshold;
            if let Some(m) = model {
                cfg.model = Some(m.parse::<ModelKind>()?);
            }
            for name in free {
                cfg.free.insert(name, true);
            }
            for name in fix {
                cfg.free.insert(name, false);
            }
            cfg.init.extend(cli::parse_assignments(&init)?);
            if !multistart_delta.is_empty() {
                cfg.multistart_delta = multistart_delta;
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            cli::cmd_analyze(&trace, &cfg, &out, prefix.as_deref(), common.strict)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nvspin: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
