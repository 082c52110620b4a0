//! Pulse sequences and their execution on the rate model.

use serde::{Deserialize, Serialize};

use super::integrate::{evolve, evolve_with_photons, READOUT_MAX_STEP};
use super::montecarlo;
use super::{
    level, rabi_curve, rate_matrix, target_levels, EsrContext, Generator, LevelPopulations, Manifold,
    MicrowaveDrive, RateParams, SpinTransition, N_LEVELS,
};
use crate::error::{Error, Result};
use crate::geometry::FieldVector;
use crate::physics::SpinParams;

/// Length of a microwave pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseLength {
    /// Resonant π pulse applied instantaneously.
    Pi,
    /// Finite pulse of the given length in ns; time passes in the dark.
    Duration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Laser { duration: f64 },
    Wait { duration: f64 },
    MwPulse { drive: MicrowaveDrive, length: PulseLength, fidelity: f64 },
    /// Instantaneous spin-conserving promotion g → e with probability `p_exc`.
    PsExcitation { p_exc: f64 },
    /// Starts photon collection for `window` ns in bins of `bin_width` ns.
    /// Segments after the readout run inside the collection window.
    Readout { window: f64, bin_width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    segments: Vec<Segment>,
}

fn seq_err(msg: impl Into<String>) -> Error {
    Error::Sequence(msg.into())
}

fn check_duration(what: &str, index: usize, d: f64) -> Result<()> {
    if !d.is_finite() || d < 0.0 {
        return Err(seq_err(format!("segment {index}: {what} must be finite and >= 0, got {d}")));
    }
    Ok(())
}

fn check_unit(what: &str, index: usize, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(seq_err(format!("segment {index}: {what} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let seq = Self { segments };
        seq.validate()?;
        Ok(seq)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn validate(&self) -> Result<()> {
        let mut readouts = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            match *seg {
                Segment::Laser { duration } | Segment::Wait { duration } => {
                    check_duration("duration", i, duration)?
                }
                Segment::MwPulse { drive, length, fidelity } => {
                    drive.validate().map_err(|e| seq_err(format!("segment {i}: {e}")))?;
                    check_unit("fidelity", i, fidelity)?;
                    match length {
                        PulseLength::Pi if drive.rabi_frequency <= 0.0 => {
                            return Err(seq_err(format!("segment {i}: π pulse needs rabi_frequency > 0")))
                        }
                        PulseLength::Duration(d) => check_duration("duration", i, d)?,
                        PulseLength::Pi => {}
                    }
                }
                Segment::PsExcitation { p_exc } => check_unit("p_exc", i, p_exc)?,
                Segment::Readout { window, bin_width } => {
                    readouts += 1;
                    if !(window > 0.0) || !window.is_finite() {
                        return Err(seq_err(format!("segment {i}: window must be > 0")));
                    }
                    if !(bin_width > 0.0) || bin_width > window {
                        return Err(seq_err(format!("segment {i}: bin width must lie in (0, window]")));
                    }
                    let n = (window / bin_width).round();
                    if (n * bin_width - window).abs() > 1e-9 * window {
                        return Err(seq_err(format!(
                            "segment {i}: window {window} is not a whole number of {bin_width} ns bins"
                        )));
                    }
                }
            }
        }
        if readouts > 1 {
            return Err(seq_err("at most one readout segment is allowed"));
        }
        Ok(())
    }

    /// Parses the `{"segments": [...]}` JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SequenceJson = serde_json::from_str(text).map_err(|e| seq_err(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        let doc = SequenceJson { segments: self.segments.iter().map(SegmentJson::from).collect() };
        serde_json::to_string_pretty(&doc).expect("sequence serializes")
    }

    /// Polarize, relax, excite with a short pulse and record the decay.
    /// Optional ground-state π pulse before the excitation and excited-state
    /// π pulse `es_pi_at` ns into the readout.
    pub fn lifetime_protocol(
        gs_pi: Option<MicrowaveDrive>,
        es_pi: Option<(MicrowaveDrive, f64, f64)>,
        window: f64,
        bin_width: f64,
    ) -> Result<Self> {
        let mut segs = vec![Segment::Laser { duration: 3000.0 }, Segment::Wait { duration: 1000.0 }];
        if let Some(drive) = gs_pi {
            segs.push(Segment::MwPulse { drive, length: PulseLength::Pi, fidelity: 1.0 });
        }
        segs.push(Segment::PsExcitation { p_exc: 1.0 });
        segs.push(Segment::Readout { window, bin_width });
        if let Some((drive, at, fidelity)) = es_pi {
            segs.push(Segment::Wait { duration: at });
            segs.push(Segment::MwPulse { drive, length: PulseLength::Pi, fidelity });
        }
        Self::new(segs)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceJson {
    segments: Vec<SegmentJson>,
}

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum SegmentJson {
    Laser {
        duration_ns: f64,
    },
    Wait {
        duration_ns: f64,
    },
    Mw {
        manifold: Manifold,
        transition: SpinTransition,
        frequency_mhz: f64,
        rabi_mhz: f64,
        linewidth_mhz: f64,
        #[serde(default, skip_serializing_if = "is_false")]
        pi_pulse: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_ns: Option<f64>,
        #[serde(default = "one")]
        fidelity: f64,
    },
    Ps {
        #[serde(default = "one")]
        p_exc: f64,
    },
    Readout {
        window_ns: f64,
        bin_ns: f64,
    },
}

impl From<&Segment> for SegmentJson {
    fn from(seg: &Segment) -> Self {
        match *seg {
            Segment::Laser { duration } => SegmentJson::Laser { duration_ns: duration },
            Segment::Wait { duration } => SegmentJson::Wait { duration_ns: duration },
            Segment::MwPulse { drive, length, fidelity } => SegmentJson::Mw {
                manifold: drive.target_manifold,
                transition: drive.target_transition,
                frequency_mhz: drive.frequency,
                rabi_mhz: drive.rabi_frequency,
                linewidth_mhz: drive.linewidth_fwhm,
                pi_pulse: length == PulseLength::Pi,
                duration_ns: match length {
                    PulseLength::Duration(d) => Some(d),
                    PulseLength::Pi => None,
                },
                fidelity,
            },
            Segment::PsExcitation { p_exc } => SegmentJson::Ps { p_exc },
            Segment::Readout { window, bin_width } => SegmentJson::Readout { window_ns: window, bin_ns: bin_width },
        }
    }
}

impl TryFrom<SequenceJson> for PulseSequence {
    type Error = Error;

    fn try_from(doc: SequenceJson) -> Result<Self> {
        let mut segments = Vec::with_capacity(doc.segments.len());
        for (i, s) in doc.segments.into_iter().enumerate() {
            segments.push(match s {
                SegmentJson::Laser { duration_ns } => Segment::Laser { duration: duration_ns },
                SegmentJson::Wait { duration_ns } => Segment::Wait { duration: duration_ns },
                SegmentJson::Mw {
                    manifold,
                    transition,
                    frequency_mhz,
                    rabi_mhz,
                    linewidth_mhz,
                    pi_pulse,
                    duration_ns,
                    fidelity,
                } => {
                    let length = match (pi_pulse, duration_ns) {
                        (true, None) => PulseLength::Pi,
                        (false, Some(d)) => PulseLength::Duration(d),
                        _ => {
                            return Err(seq_err(format!(
                                "segment {i}: mw needs exactly one of `pi_pulse: true` or `duration_ns`"
                            )))
                        }
                    };
                    let drive = MicrowaveDrive {
                        frequency: frequency_mhz,
                        rabi_frequency: rabi_mhz,
                        linewidth_fwhm: linewidth_mhz,
                        target_manifold: manifold,
                        target_transition: transition,
                    };
                    Segment::MwPulse { drive, length, fidelity }
                }
                SegmentJson::Ps { p_exc } => Segment::PsExcitation { p_exc },
                SegmentJson::Readout { window_ns, bin_ns } => Segment::Readout { window: window_ns, bin_width: bin_ns },
            });
        }
        PulseSequence::new(segments)
    }
}

/// Fine-structure parameters of both triplets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinContexts {
    pub ground: SpinParams,
    pub excited: SpinParams,
}

impl Default for SpinContexts {
    fn default() -> Self {
        Self { ground: SpinParams::ground_default(), excited: SpinParams::excited_default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Expected photons per bin, deterministic.
    Expected,
    /// Stochastic trajectories with integer photon counts.
    MonteCarlo { seed: u64, shots: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramKind {
    Expected,
    Counts { shots: u64 },
}

/// Photon arrival histogram relative to the readout start.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayHistogram {
    /// `len() + 1` edges in ns.
    pub bin_edges: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: HistogramKind,
}

impl DecayHistogram {
    pub fn new(bin_edges: Vec<f64>, values: Vec<f64>, kind: HistogramKind) -> Result<Self> {
        if bin_edges.len() != values.len() + 1 {
            return Err(crate::error::invalid("histogram needs one more edge than bins"));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(crate::error::invalid("histogram edges must be strictly ascending"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(crate::error::invalid("histogram values must be finite and >= 0"));
        }
        Ok(Self { bin_edges, values, kind })
    }

    /// Uniform bins of `bin_width` starting at `start`.
    pub fn uniform(start: f64, bin_width: f64, values: Vec<f64>, kind: HistogramKind) -> Result<Self> {
        let edges = (0..=values.len()).map(|i| start + i as f64 * bin_width).collect();
        Self::new(edges, values, kind)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub histogram: DecayHistogram,
    pub final_populations: LevelPopulations,
    pub warnings: Vec<String>,
}

/// Sequence lowered to primitive operations shared by both engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) enum Step {
    Evolve { laser: bool, duration: f64 },
    Excite { p_exc: f64 },
    Swap { a: usize, b: usize, eta: f64 },
    StartReadout { window: f64, bin_width: f64 },
}

pub(super) fn compile(seq: &PulseSequence, esr: &EsrContext) -> Vec<Step> {
    let mut steps = Vec::new();
    let mut readout: Option<(f64, f64)> = None;
    for seg in seq.segments() {
        match *seg {
            Segment::Laser { duration } => steps.push(Step::Evolve { laser: true, duration }),
            Segment::Wait { duration } => steps.push(Step::Evolve { laser: false, duration }),
            Segment::PsExcitation { p_exc } => steps.push(Step::Excite { p_exc }),
            Segment::MwPulse { drive, length, fidelity } => {
                let f0 = esr.frequency(drive.target_manifold, drive.target_transition);
                let (a, b) = target_levels(drive.target_manifold, drive.target_transition);
                match length {
                    PulseLength::Pi => {
                        let t_pi = 1e3 / (2.0 * drive.rabi_frequency);
                        let eta = fidelity * rabi_curve(&drive, f0, &[t_pi])[0];
                        steps.push(Step::Swap { a, b, eta });
                    }
                    PulseLength::Duration(d) => {
                        let eta = fidelity * rabi_curve(&drive, f0, &[d])[0];
                        steps.push(Step::Evolve { laser: false, duration: 0.5 * d });
                        steps.push(Step::Swap { a, b, eta });
                        steps.push(Step::Evolve { laser: false, duration: 0.5 * d });
                    }
                }
            }
            Segment::Readout { window, bin_width } => {
                readout = Some((window, 0.0));
                steps.push(Step::StartReadout { window, bin_width });
            }
        }
        if let (Some((_, elapsed)), false) = (readout.as_mut(), matches!(seg, Segment::Readout { .. })) {
            *elapsed += match *seg {
                Segment::Laser { duration } | Segment::Wait { duration } => duration,
                Segment::MwPulse { length: PulseLength::Duration(d), .. } => d,
                _ => 0.0,
            };
        }
    }
    if let Some((window, elapsed)) = readout {
        if elapsed < window {
            steps.push(Step::Evolve { laser: false, duration: window - elapsed });
        }
    }
    steps
}

pub(super) fn photon_weights(rp: &RateParams) -> [f64; N_LEVELS] {
    let mut w = [0.0; N_LEVELS];
    for i in level::EXCITED {
        w[i] = rp.gamma_rad;
    }
    w
}

pub(super) fn apply_instant(p: &mut [f64; N_LEVELS], step: &Step) {
    match *step {
        Step::Excite { p_exc } => {
            for (g, e) in level::GROUND.iter().zip(level::EXCITED) {
                let moved = p_exc * p[*g];
                p[*g] -= moved;
                p[e] += moved;
            }
        }
        Step::Swap { a, b, eta } => {
            let (pa, pb) = (p[a], p[b]);
            p[a] = (1.0 - eta) * pa + eta * pb;
            p[b] = eta * pa + (1.0 - eta) * pb;
        }
        _ => {}
    }
}

struct Recorder {
    start: f64,
    bin_width: f64,
    values: Vec<f64>,
    current: usize,
}

impl Recorder {
    fn edge(&self, i: usize) -> f64 {
        self.start + (i + 1) as f64 * self.bin_width
    }
}

fn advance(
    p: &mut LevelPopulations,
    t: &mut f64,
    gen: &Generator,
    duration: f64,
    rec: &mut Option<Recorder>,
    weights: &[f64; N_LEVELS],
) -> Result<()> {
    let end = *t + duration;
    loop {
        match rec {
            Some(r) if r.current < r.values.len() && *t < end => {
                let edge = r.edge(r.current);
                let stop = edge.min(end);
                let (next, photons) = evolve_with_photons(p, gen, stop - *t, weights, READOUT_MAX_STEP)?;
                *p = next;
                r.values[r.current] += photons;
                *t = stop;
                if stop == edge {
                    r.current += 1;
                }
            }
            _ => {
                if *t < end {
                    *p = evolve(p, gen, end - *t)?;
                }
                *t = end;
                return Ok(());
            }
        }
    }
}

/// Runs a sequence from the thermal ground state.
pub fn run_sequence(
    seq: &PulseSequence,
    rp: &RateParams,
    spins: &SpinContexts,
    field_nv: &FieldVector,
    mode: RunMode,
) -> Result<SequenceResult> {
    run_sequence_from(&LevelPopulations::thermal_ground(), seq, rp, spins, field_nv, mode)
}

/// Runs a sequence from the given initial populations.
pub fn run_sequence_from(
    initial: &LevelPopulations,
    seq: &PulseSequence,
    rp: &RateParams,
    spins: &SpinContexts,
    field_nv: &FieldVector,
    mode: RunMode,
) -> Result<SequenceResult> {
    seq.validate()?;
    rp.validate()?;
    initial.validate()?;
    let esr = EsrContext::from_params(&spins.ground, &spins.excited, field_nv)?;
    let steps = compile(seq, &esr);
    let gens = [rate_matrix(rp, false, &[], None)?, rate_matrix(rp, true, &[], None)?];

    let mut warnings = Vec::new();
    let readout = steps.iter().find_map(|s| match *s {
        Step::StartReadout { window, bin_width } => Some((window, bin_width)),
        _ => None,
    });
    if readout.is_none() {
        warnings.push("sequence has no readout segment; histogram is empty".to_string());
    }

    let (histogram, final_populations) = match mode {
        RunMode::Expected => run_expected(initial, &steps, &gens, rp)?,
        RunMode::MonteCarlo { seed, shots } => {
            if shots == 0 {
                return Err(crate::error::invalid("Monte Carlo mode needs at least one shot"));
            }
            montecarlo::run(initial, &steps, &gens, seed, shots)?
        }
    };
    if readout.is_some() && histogram.total() == 0.0 {
        warnings.push("readout recorded no photons: nothing was excited before or during the window".to_string());
    }
    Ok(SequenceResult { histogram, final_populations, warnings })
}

fn run_expected(
    initial: &LevelPopulations,
    steps: &[Step],
    gens: &[Generator; 2],
    rp: &RateParams,
) -> Result<(DecayHistogram, LevelPopulations)> {
    let weights = photon_weights(rp);
    let mut p = *initial;
    let mut t = 0.0;
    let mut rec: Option<Recorder> = None;
    let mut bin_width = 1.0;
    for step in steps {
        match *step {
            Step::Evolve { laser, duration } => {
                advance(&mut p, &mut t, &gens[laser as usize], duration, &mut rec, &weights)?
            }
            Step::StartReadout { window, bin_width: w } => {
                bin_width = w;
                let n = (window / w).round() as usize;
                rec = Some(Recorder { start: t, bin_width: w, values: vec![0.0; n], current: 0 });
            }
            _ => {
                apply_instant(&mut p.p, step);
                p = p.clipped();
            }
        }
    }
    let values = rec.map(|r| r.values).unwrap_or_default();
    let hist = DecayHistogram::uniform(0.0, bin_width, values, HistogramKind::Expected)?;
    Ok((hist, p))
}
