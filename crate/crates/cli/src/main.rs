//! `nvodmr`: simulate and fit ODMR, Zeeman, LAC and lifetime experiments on
//! single NV centers.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, flags or input data. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Anything that fails after inputs were accepted. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl From<nv_odmr::Error> for CliError {
    fn from(e: nv_odmr::Error) -> Self {
        match e {
            nv_odmr::Error::InvalidInput(m) => CliError::Validation(m),
            nv_odmr::Error::Sequence(m) => CliError::Validation(format!("sequence: {m}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nvodmr", version, about = "NV center ODMR and photodynamics simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Expected,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifoldArg {
    Gs,
    Es,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario config (JSON). Built-in bulk defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path; a manifest is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Expected)]
    pub mode: Mode,
    /// Monte Carlo shots.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub shots: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// cw ODMR spectrum: frequency_mhz, pl_normalized.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Field magnitude in gauss (direction from the config).
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = 1000.0)]
        fmin: f64,
        #[arg(long, default_value_t = 3200.0)]
        fmax: f64,
        #[arg(long, default_value_t = 1.0)]
        fstep: f64,
    },
    /// Transition frequencies against axial field: b_gauss, omega_minus_mhz, omega_plus_mhz.
    Zeeman {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        bmin: f64,
        #[arg(long, default_value_t = 600.0)]
        bmax: f64,
        #[arg(long, default_value_t = 120)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = ManifoldArg::Es)]
        manifold: ManifoldArg,
    },
    /// Transition frequencies while the field rotates about a crystal axis.
    Rotation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 92.0)]
        b: f64,
        /// Crystal-frame rotation axis, e.g. "1,-1,0".
        #[arg(long, value_parser = parse_vec3, default_value = "1,-1,0")]
        rotation_axis: [f64; 3],
        /// Crystal-frame field direction at angle 0.
        #[arg(long, value_parser = parse_vec3)]
        initial_dir: [f64; 3],
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        #[arg(long, default_value_t = 360.0)]
        stop: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, value_enum, default_value_t = ManifoldArg::Es)]
        manifold: ManifoldArg,
    },
    /// Excited-state decay after a short laser pulse: t_ns, pl.
    Decay {
        #[command(flatten)]
        common: Common,
        /// Ground-state π pulse before the excitation (prepares ms=-1).
        #[arg(long)]
        pi_gs: bool,
        /// Excited-state π pulse this many ns into the decay.
        #[arg(long)]
        pi_es_at: Option<f64>,
        /// Efficiency of the excited-state π pulse.
        #[arg(long)]
        fidelity: Option<f64>,
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        bin: Option<f64>,
    },
    /// Rabi nutation probability: t_ns, population.
    Rabi {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200.0)]
        rabi: f64,
        #[arg(long, default_value_t = 0.0)]
        detuning: f64,
        #[arg(long, default_value_t = 10.0)]
        tmax: f64,
        #[arg(long, default_value_t = 0.01)]
        tstep: f64,
    },
    /// Steady-state PL against field magnitude: b_gauss, pl_normalized.
    Lac {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        bmin: f64,
        #[arg(long, default_value_t = 1200.0)]
        bmax: f64,
        #[arg(long, default_value_t = 1200)]
        steps: usize,
        /// Tilt from the NV axis in degrees (config value when omitted).
        #[arg(long, allow_hyphen_values = true)]
        misalignment: Option<f64>,
    },
    /// Fit D and g to a Zeeman CSV.
    FitZeeman {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit a lifetime (or two around --break) to a decay CSV.
    FitDecay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "break")]
        break_time: Option<f64>,
        #[arg(long)]
        tmin: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Fit Lorentzian dips to a spectrum CSV.
    FitSpectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Initial dip centres in MHz, e.g. "1423,2870"; detected when omitted.
        #[arg(long, value_delimiter = ',')]
        centers: Vec<f64>,
    },
    /// Run a pulse sequence from a JSON file: t_ns, pl.
    RunSequence {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sequence: PathBuf,
    },
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
