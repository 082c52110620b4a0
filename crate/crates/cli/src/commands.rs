use std::path::{Path, PathBuf};

use nv_odmr::dynamics::{
    rabi_curve, run_sequence, DecayHistogram, EsrContext, HistogramKind, Manifold, MicrowaveDrive, PulseSequence,
    RunMode, SequenceResult, SpinContexts, SpinTransition,
};
use nv_odmr::fitting::{
    fit_exponential, fit_lorentzian_series, fit_piecewise_decay, fit_zeeman, Branch, DataSeries, FitResult,
    ZeemanPoint,
};
use nv_odmr::geometry::{rotation_scan_frequencies, RotationScan};
use nv_odmr::spectra::{detect_dips, lac_scan, linspace, odmr_spectrum, zeeman_scan, PLATEAU_NOISE};
use nv_odmr::SpinParams;

use crate::config::{load_config, ScenarioConfig};
use crate::output::{write_file, write_manifest, RunManifest, Table};
use crate::{CliError, Command, Common, ManifoldArg, Mode};

/// Above this many auto-detected dips the data is too noisy to guess from.
const MAX_AUTO_DIPS: usize = 8;

struct Context {
    name: &'static str,
    common: Common,
    cfg: ScenarioConfig,
}

impl Context {
    fn new(name: &'static str, common: Common) -> Result<Self, CliError> {
        let cfg = load_config(common.config.as_deref())?;
        if common.mode == Mode::Mc && common.shots == 0 {
            return Err(CliError::Validation("--shots: must be > 0".into()));
        }
        Ok(Self { name, common, cfg })
    }

    fn out_path(&self) -> PathBuf {
        self.common
            .out
            .clone()
            .or_else(|| self.cfg.output.path.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", self.name)))
    }

    fn run_mode(&self) -> RunMode {
        match self.common.mode {
            Mode::Expected => RunMode::Expected,
            Mode::Mc => RunMode::MonteCarlo { seed: self.common.seed, shots: self.common.shots },
        }
    }

    fn spins(&self) -> SpinContexts {
        SpinContexts { ground: self.cfg.ground, excited: self.cfg.excited }
    }

    fn manifold(&self, m: ManifoldArg) -> SpinParams {
        match m {
            ManifoldArg::Gs => self.cfg.ground,
            ManifoldArg::Es => self.cfg.excited,
        }
    }

    /// Writes the table and its manifest.
    fn finish(&self, table: &Table) -> Result<(), CliError> {
        let out = self.out_path();
        write_file(&out, &table.to_csv())?;
        let manifest = RunManifest {
            command: self.name.to_string(),
            config_sha256: self.cfg.sha256(),
            seed: self.common.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: vec![out.display().to_string()],
        };
        let m = write_manifest(&out, &manifest)?;
        eprintln!("wrote {} and {}", out.display(), m.display());
        Ok(())
    }
}

fn grid(min: f64, max: f64, steps: usize, what: &str) -> Result<Vec<f64>, CliError> {
    if !(min.is_finite() && max.is_finite()) || max <= min {
        return Err(CliError::Validation(format!("--{what}min/--{what}max: need min < max, got {min} and {max}")));
    }
    if steps == 0 {
        return Err(CliError::Validation("--steps: must be > 0".into()));
    }
    Ok(linspace(min, max, steps))
}

fn stepped(min: f64, max: f64, step: f64, flag: &str) -> Result<Vec<f64>, CliError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(CliError::Validation(format!("--{flag}: must be > 0, got {step}")));
    }
    if !(min.is_finite() && max.is_finite()) || max <= min {
        return Err(CliError::Validation(format!("range: need min < max, got {min} and {max}")));
    }
    Ok(linspace(min, max, ((max - min) / step).round().max(1.0) as usize))
}

fn positive(v: f64, flag: &str) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("--{flag}: must be > 0, got {v}")))
    }
}

fn histogram_table(hist: &DecayHistogram) -> Table {
    let mut t = Table::new(&["t_ns", "pl"]);
    for (edge, v) in hist.bin_edges.iter().zip(&hist.values) {
        t.push(vec![*edge, *v]);
    }
    t
}

fn fit_table(fits: &[FitResult], prefix: impl Fn(usize) -> String) -> String {
    let mut s = String::from("parameter,value,std_error\n");
    for (k, fit) in fits.iter().enumerate() {
        for ((n, v), e) in fit.names.iter().zip(&fit.values).zip(&fit.std_errors) {
            s.push_str(&format!("{}{n},{v},{e}\n", prefix(k)));
        }
    }
    s
}

fn print_warnings(result: &SequenceResult) {
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Spectrum { common, b, fmin, fmax, fstep } => {
            let mut ctx = Context::new("spectrum", common)?;
            if let Some(b) = b {
                if !(b.is_finite() && b >= 0.0) {
                    return Err(CliError::Validation(format!("--b: must be >= 0, got {b}")));
                }
                ctx.cfg.field = ctx.cfg.field.with_magnitude(b);
            }
            let grid = stepped(fmin, fmax, fstep, "fstep")?;
            let field = ctx.cfg.field_nv()?;
            let s = odmr_spectrum(&ctx.cfg.ground, &ctx.cfg.excited, &ctx.cfg.rates, &ctx.cfg.drive, &field, &grid)?;
            for f in &s.flags {
                eprintln!("warning: {f}");
            }
            println!("dips_mhz = {:?}", s.dips);
            let mut t = Table::new(&["frequency_mhz", "pl_normalized"]);
            for (f, p) in s.frequency_grid.iter().zip(&s.pl) {
                t.push(vec![*f, *p]);
            }
            ctx.finish(&t)
        }
        Command::Zeeman { common, bmin, bmax, steps, manifold } => {
            let ctx = Context::new("zeeman", common)?;
            let pts = zeeman_scan(&ctx.manifold(manifold), &grid(bmin, bmax, steps, "b")?)?;
            let mut t = Table::new(&["b_gauss", "omega_minus_mhz", "omega_plus_mhz"]);
            for p in pts {
                t.push(vec![p.b_gauss, p.omega_minus, p.omega_plus]);
            }
            ctx.finish(&t)
        }
        Command::Rotation { common, b, rotation_axis, initial_dir, start, stop, step, manifold } => {
            let ctx = Context::new("rotation", common)?;
            positive(step, "step")?;
            let scan = RotationScan::uniform(rotation_axis, b, start, stop, step)?;
            let pts = rotation_scan_frequencies(&scan, &initial_dir, &ctx.manifold(manifold), &ctx.cfg.nv_orientation())?;
            let mut t = Table::new(&["angle_deg", "omega_minus_mhz", "omega_plus_mhz"]);
            for p in pts {
                t.push(vec![p.angle_deg, p.omega_minus, p.omega_plus]);
            }
            ctx.finish(&t)
        }
        Command::Decay { common, pi_gs, pi_es_at, fidelity, window, bin } => {
            let ctx = Context::new("decay", common)?;
            let p = ctx.cfg.pulses;
            let window = positive(window.unwrap_or(p.window_ns), "window")?;
            let bin = positive(bin.unwrap_or(p.bin_ns), "bin")?;
            let fidelity = fidelity.unwrap_or(p.fidelity);
            if !(0.0..=1.0).contains(&fidelity) {
                return Err(CliError::Validation(format!("--fidelity: must lie in [0, 1], got {fidelity}")));
            }
            let field = ctx.cfg.field_nv()?;
            let esr = EsrContext::from_params(&ctx.cfg.ground, &ctx.cfg.excited, &field)?;
            let drive = |manifold: Manifold, rabi: f64, width: f64| MicrowaveDrive {
                frequency: esr.frequency(manifold, SpinTransition::Minus),
                rabi_frequency: rabi,
                linewidth_fwhm: width,
                target_manifold: manifold,
                target_transition: SpinTransition::Minus,
            };
            let gs_pi = pi_gs.then(|| drive(Manifold::Ground, p.gs_pi_rabi_mhz, ctx.cfg.drive.gs_linewidth_mhz));
            let es_pi = match pi_es_at {
                Some(at) if !(at.is_finite() && at >= 0.0 && at < window) => {
                    return Err(CliError::Validation(format!("--pi-es-at: must lie in [0, window), got {at}")))
                }
                Some(at) => Some((drive(Manifold::Excited, p.es_pi_rabi_mhz, ctx.cfg.drive.es_linewidth_mhz), at, fidelity)),
                None => None,
            };
            let seq = PulseSequence::lifetime_protocol(gs_pi, es_pi, window, bin)?;
            let result = run_sequence(&seq, &ctx.cfg.rates, &ctx.spins(), &field, ctx.run_mode())?;
            print_warnings(&result);
            let fit = match pi_es_at {
                Some(at) => fit_piecewise_decay(&result.histogram, at),
                None => fit_exponential(&result.histogram, (0.0, window)),
            };
            match fit {
                Ok(f) => print!("{}", f.report()),
                Err(e) => eprintln!("warning: lifetime fit failed: {e}"),
            }
            ctx.finish(&histogram_table(&result.histogram))
        }
        Command::Rabi { common, rabi, detuning, tmax, tstep } => {
            let ctx = Context::new("rabi", common)?;
            if !(rabi.is_finite() && rabi >= 0.0) {
                return Err(CliError::Validation(format!("--rabi: must be >= 0, got {rabi}")));
            }
            if !detuning.is_finite() {
                return Err(CliError::Validation("--detuning: must be finite".into()));
            }
            let times = stepped(0.0, tmax, tstep, "tstep")?;
            let field = ctx.cfg.field_nv()?;
            let f0 = EsrContext::from_params(&ctx.cfg.ground, &ctx.cfg.excited, &field)?
                .frequency(Manifold::Ground, SpinTransition::Minus);
            let drive = MicrowaveDrive {
                frequency: f0 + detuning,
                rabi_frequency: rabi,
                linewidth_fwhm: ctx.cfg.drive.gs_linewidth_mhz,
                target_manifold: Manifold::Ground,
                target_transition: SpinTransition::Minus,
            };
            let p = rabi_curve(&drive, f0, &times);
            let mut t = Table::new(&["t_ns", "population"]);
            for (x, y) in times.iter().zip(p) {
                t.push(vec![*x, y]);
            }
            ctx.finish(&t)
        }
        Command::Lac { common, bmin, bmax, steps, misalignment } => {
            let ctx = Context::new("lac", common)?;
            let theta = misalignment.unwrap_or(ctx.cfg.field.misalignment_deg);
            let scan = lac_scan(&ctx.cfg.ground, &ctx.cfg.excited, &ctx.cfg.rates, &grid(bmin, bmax, steps, "b")?, theta)?;
            for f in &scan.flags {
                eprintln!("warning: {f}");
            }
            println!("minima_gauss = {:?}", scan.minima);
            let mut t = Table::new(&["b_gauss", "pl_normalized"]);
            for (b, p) in scan.b_grid.iter().zip(&scan.pl) {
                t.push(vec![*b, *p]);
            }
            ctx.finish(&t)
        }
        Command::FitZeeman { common, input } => {
            let ctx = Context::new("fit-zeeman", common)?;
            let table = Table::read(&input)?;
            let b = table.column("b_gauss")?;
            let mut pts = Vec::new();
            for (col, branch) in [("omega_minus_mhz", Branch::Minus), ("omega_plus_mhz", Branch::Plus)] {
                if let Ok(w) = table.column(col) {
                    pts.extend(b.iter().zip(w).filter(|(_, w)| w.is_finite()).map(|(b, w)| ZeemanPoint::new(*b, w, branch)));
                }
            }
            let fit = fit_zeeman(&pts)?;
            print!("{}", fit.report());
            write_fit(&ctx, &[fit], |_| String::new())
        }
        Command::FitDecay { common, input, break_time, tmin, tmax } => {
            let ctx = Context::new("fit-decay", common)?;
            let hist = read_histogram(&input, ctx.common.mode, ctx.common.shots)?;
            let lo = tmin.unwrap_or(hist.bin_edges[0]);
            let hi = tmax.unwrap_or(*hist.bin_edges.last().expect("non-empty"));
            let fit = match break_time {
                Some(t) => fit_piecewise_decay(&hist, t)?,
                None => fit_exponential(&hist, (lo, hi))?,
            };
            print!("{}", fit.report());
            write_fit(&ctx, &[fit], |_| String::new())
        }
        Command::FitSpectrum { common, input, centers } => {
            let ctx = Context::new("fit-spectrum", common)?;
            let table = Table::read(&input)?;
            let x = table.column("frequency_mhz")?;
            let y = table.column("pl_normalized")?;
            let centers = if centers.is_empty() {
                let found = detect_dips(&x, &y, PLATEAU_NOISE);
                if found.is_empty() || found.len() > MAX_AUTO_DIPS {
                    return Err(CliError::Validation(format!(
                        "--centers: {} dips detected automatically; give initial centres explicitly",
                        found.len()
                    )));
                }
                found
            } else {
                centers
            };
            let fits = fit_lorentzian_series(&DataSeries::new(x, y, None)?, &centers)?;
            for (k, f) in fits.iter().enumerate() {
                println!("dip {k}");
                print!("{}", f.report());
            }
            write_fit(&ctx, &fits, |k| if fits.len() > 1 { format!("dip{k}_") } else { String::new() })
        }
        Command::RunSequence { common, sequence } => {
            let ctx = Context::new("run-sequence", common)?;
            let text = std::fs::read_to_string(&sequence)
                .map_err(|e| CliError::Validation(format!("--sequence {}: {e}", sequence.display())))?;
            let seq = PulseSequence::from_json(&text)?;
            let result = run_sequence(&seq, &ctx.cfg.rates, &ctx.spins(), &ctx.cfg.field_nv()?, ctx.run_mode())?;
            print_warnings(&result);
            println!("final_populations = {:?}", result.final_populations.p);
            ctx.finish(&histogram_table(&result.histogram))
        }
    }
}

fn write_fit(ctx: &Context, fits: &[FitResult], prefix: impl Fn(usize) -> String) -> Result<(), CliError> {
    let out = ctx.out_path();
    write_file(&out, &fit_table(fits, prefix))?;
    let manifest = RunManifest {
        command: ctx.name.to_string(),
        config_sha256: ctx.cfg.sha256(),
        seed: ctx.common.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        outputs: vec![out.display().to_string()],
    };
    write_manifest(&out, &manifest)?;
    Ok(())
}

/// Decay CSV with left bin edges in `t_ns`; bins are taken as uniform.
fn read_histogram(path: &Path, mode: Mode, shots: u64) -> Result<DecayHistogram, CliError> {
    let table = Table::read(path)?;
    let t = table.column("t_ns")?;
    let v = table.column("pl")?;
    if t.len() < 2 {
        return Err(CliError::Validation("input: need at least two bins".into()));
    }
    let width = t[1] - t[0];
    if !(width > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - width).abs() > 1e-6 * width) {
        return Err(CliError::Validation("input: t_ns must be uniformly spaced and ascending".into()));
    }
    let kind = match mode {
        Mode::Expected => HistogramKind::Expected,
        Mode::Mc => HistogramKind::Counts { shots },
    };
    Ok(DecayHistogram::uniform(t[0], width, v, kind)?)
}
