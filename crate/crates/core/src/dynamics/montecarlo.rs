//! Jump-process trajectories of the rate model, one emitter per shot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sequence::{DecayHistogram, HistogramKind, Step};
use super::{level, Generator, LevelPopulations, N_LEVELS};
use crate::error::Result;

const BATCH: u64 = 8192;

/// Per-generator jump tables.
struct JumpTable {
    out_rate: [f64; N_LEVELS],
    /// Cumulative destination probabilities for each source level.
    cumulative: [[f64; N_LEVELS]; N_LEVELS],
}

impl JumpTable {
    fn new(g: &Generator) -> Self {
        let mut out_rate = [0.0; N_LEVELS];
        let mut cumulative = [[0.0; N_LEVELS]; N_LEVELS];
        for from in 0..N_LEVELS {
            let total = g.out_rate(from);
            out_rate[from] = total;
            let mut acc = 0.0;
            for to in 0..N_LEVELS {
                if to != from && total > 0.0 {
                    acc += g.rate(from, to) / total;
                }
                cumulative[from][to] = acc;
            }
        }
        Self { out_rate, cumulative }
    }

    fn destination(&self, from: usize, u: f64) -> usize {
        let row = &self.cumulative[from];
        let target = u * row[N_LEVELS - 1];
        (0..N_LEVELS).find(|&to| to != from && target < row[to]).unwrap_or_else(|| {
            // u at the top edge: last reachable level
            (0..N_LEVELS).rev().find(|&to| to != from && self.out_rate[from] > 0.0).unwrap_or(from)
        })
    }
}

fn is_excited(i: usize) -> bool {
    level::EXCITED.contains(&i)
}

fn is_ground(i: usize) -> bool {
    level::GROUND.contains(&i)
}

fn sample_level(cumulative: &[f64; N_LEVELS], u: f64) -> usize {
    cumulative.iter().position(|&c| u < c).unwrap_or(N_LEVELS - 1)
}

struct BatchOutput {
    counts: Vec<u64>,
    finals: [u64; N_LEVELS],
}

struct Readout {
    start: f64,
    bin_width: f64,
    n_bins: usize,
}

fn run_batch(
    initial_cdf: &[f64; N_LEVELS],
    steps: &[Step],
    tables: &[JumpTable; 2],
    readout: Option<(f64, f64)>,
    seed: u64,
    batch: u64,
    shots: u64,
) -> BatchOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    let n_bins = readout.map(|(w, b)| (w / b).round() as usize).unwrap_or(0);
    let mut counts = vec![0u64; n_bins];
    let mut finals = [0u64; N_LEVELS];

    for _ in 0..shots {
        let mut state = sample_level(initial_cdf, rng.gen::<f64>());
        let mut t = 0.0;
        let mut rec: Option<Readout> = None;
        for step in steps {
            match *step {
                Step::Evolve { laser, duration } => {
                    let table = &tables[laser as usize];
                    let end = t + duration;
                    loop {
                        let rate = table.out_rate[state];
                        if rate <= 0.0 {
                            break;
                        }
                        let wait = -(1.0 - rng.gen::<f64>()).ln() / rate;
                        if t + wait >= end {
                            break;
                        }
                        t += wait;
                        let next = table.destination(state, rng.gen::<f64>());
                        if let Some(r) = &rec {
                            if is_excited(state) && is_ground(next) && t >= r.start {
                                let bin = ((t - r.start) / r.bin_width) as usize;
                                if bin < r.n_bins {
                                    counts[bin] += 1;
                                }
                            }
                        }
                        state = next;
                    }
                    t = end;
                }
                Step::Excite { p_exc } => {
                    if let Some(slot) = level::GROUND.iter().position(|&g| g == state) {
                        if rng.gen::<f64>() < p_exc {
                            state = level::EXCITED[slot];
                        }
                    }
                }
                Step::Swap { a, b, eta } => {
                    if (state == a || state == b) && rng.gen::<f64>() < eta {
                        state = if state == a { b } else { a };
                    }
                }
                Step::StartReadout { window, bin_width } => {
                    rec = Some(Readout { start: t, bin_width, n_bins: (window / bin_width).round() as usize });
                }
            }
        }
        finals[state] += 1;
    }
    BatchOutput { counts, finals }
}

pub(super) fn run(
    initial: &LevelPopulations,
    steps: &[Step],
    gens: &[Generator; 2],
    seed: u64,
    shots: u64,
) -> Result<(DecayHistogram, LevelPopulations)> {
    let tables = [JumpTable::new(&gens[0]), JumpTable::new(&gens[1])];
    let mut initial_cdf = [0.0; N_LEVELS];
    let total = initial.total();
    let mut acc = 0.0;
    for i in 0..N_LEVELS {
        acc += initial.p[i] / total;
        initial_cdf[i] = acc;
    }
    let readout = steps.iter().find_map(|s| match *s {
        Step::StartReadout { window, bin_width } => Some((window, bin_width)),
        _ => None,
    });

    let n_batches = shots.div_ceil(BATCH);
    let outputs: Vec<BatchOutput> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let n = BATCH.min(shots - b * BATCH);
            run_batch(&initial_cdf, steps, &tables, readout, seed, b, n)
        })
        .collect();

    let n_bins = readout.map(|(w, b)| (w / b).round() as usize).unwrap_or(0);
    let mut counts = vec![0u64; n_bins];
    let mut finals = [0u64; N_LEVELS];
    for out in &outputs {
        for (c, x) in counts.iter_mut().zip(&out.counts) {
            *c += x;
        }
        for (f, x) in finals.iter_mut().zip(&out.finals) {
            *f += x;
        }
    }
    let bin_width = readout.map(|(_, b)| b).unwrap_or(1.0);
    let values = counts.into_iter().map(|c| c as f64).collect();
    let hist = DecayHistogram::uniform(0.0, bin_width, values, HistogramKind::Counts { shots })?;
    let p = finals.map(|f| f as f64 / shots as f64);
    Ok((hist, LevelPopulations { p }))
}
