//! Quantum-jump unraveling of the master equation.
//!
//! Between jumps the unnormalized state evolves under
//! H_eff = H − (i/2) Σ L†L. The drive is cut into pieces on which H_eff is
//! held constant (ramps are split into short midpoint pieces), and each
//! piece carries a ladder of exact propagators exp(−i H_eff len/2^k). The
//! squared norm is non-increasing, so the first crossing of the random
//! threshold is located by descending the ladder.

use super::master::{DensityMatrix, Model, SequenceRun};
use crate::error::{Error, Result};
use crate::linalg::{expm, hermitian_eigen};
use crate::{Mat8, Vec8, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Longest constant piece used to approximate a linear ramp, ns.
const RAMP_PIECE: f64 = 0.5;
/// Upper bound on the jump-time resolution, ns.
const TIME_RESOLUTION: f64 = 1.0 / 32.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    pub sequence_index: u64,
    /// Time within the sequence, ns.
    pub time: f64,
    /// Index into the model's jump operators.
    pub channel: usize,
    pub detected: bool,
}

struct Piece {
    start: f64,
    end: f64,
    /// ladder[k] = exp(−i H_eff (end − start) / 2^k)
    ladder: Vec<Mat8>,
    /// Index of the sample time at `end`, if any.
    sample: Option<usize>,
}

/// Ensemble-averaged manifold populations of the trajectories at the
/// requested sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationAverage {
    pub times: Vec<f64>,
    /// Mean (S, P, D) at each time.
    pub mean: Vec<[f64; 3]>,
    /// Standard error of the mean for (S, P, D).
    pub stderr: Vec<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub events: Vec<EmissionEvent>,
    pub populations: Option<PopulationAverage>,
}

/// Prepared quantum-jump simulation of one model over the window
/// [start, period) of each sequence.
pub struct JumpSimulator<'a> {
    model: &'a Model,
    pieces: Vec<Piece>,
    start: f64,
    /// Eigen-ensemble of the cyclic state at `start`.
    weights: Vec<f64>,
    states: Vec<Vec8>,
    sample_times: Vec<f64>,
}

fn manifolds(psi: &Vec8) -> [f64; 3] {
    let norm = psi.norm_squared();
    let p = |r: std::ops::Range<usize>| r.map(|i| psi[i].norm_sqr()).sum::<f64>() / norm;
    [p(0..2), p(2..4), p(4..8)]
}

impl<'a> JumpSimulator<'a> {
    /// Sequences start at `start` (within the period) from the cyclic state
    /// of `run` and end at the period boundary. `sample_times` must lie in
    /// (start, period].
    pub fn new(model: &'a Model, run: &SequenceRun, start: f64, sample_times: &[f64]) -> Result<Self> {
        let period = model.sequence()?.repetition_period;
        if !(0.0..period).contains(&start) {
            return Err(Error::Invalid(format!("trajectory start {start} outside [0, {period})")));
        }
        let mut samples = sample_times.to_vec();
        samples.sort_by(|a, b| a.total_cmp(b));
        if samples.iter().any(|&t| t <= start || t > period) {
            return Err(Error::Invalid("trajectory sample times must lie in (start, period]".into()));
        }

        let rho = if start > 0.0 {
            DensityMatrix(model.states_at(&run.start_state, 0.0, &[start])?[0])
        } else {
            run.start_state
        };
        let (vals, vecs) = hermitian_eigen(&rho.0);
        let weights: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        let states = (0..8).map(|i| vecs.column(i).into_owned()).collect();

        let mut cuts: Vec<f64> = model.drive.breakpoints(start, period);
        cuts.extend(samples.iter().copied().filter(|&t| t < period));
        cuts.push(start);
        cuts.push(period);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();

        let gen = &model.generator;
        let mut pieces = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let seg = model.drive.segment_at(0.5 * (a + b));
            let n = if seg.is_constant() { 1 } else { ((b - a) / RAMP_PIECE).ceil() as usize };
            let h = (b - a) / n as f64;
            for i in 0..n {
                let (pa, pb) = (a + i as f64 * h, a + (i + 1) as f64 * h);
                let (sb, sr) = seg.scales_at(0.5 * (pa + pb));
                let heff = gen.effective_hamiltonian(sb, sr);
                let levels = ((pb - pa) / TIME_RESOLUTION).log2().ceil().max(0.0) as usize;
                let ladder = (0..=levels)
                    .map(|k| {
                        let dt = (pb - pa) / 2f64.powi(k as i32);
                        expm(&(heff * C64::new(0.0, -dt)))
                    })
                    .collect();
                let sample = if i + 1 == n {
                    samples.iter().position(|&t| t == b)
                } else {
                    None
                };
                pieces.push(Piece { start: pa, end: pb, ladder, sample });
            }
        }
        Ok(Self {
            model,
            pieces,
            start,
            weights,
            states,
            sample_times: samples,
        })
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Vec8 {
        let total: f64 = self.weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (w, s) in self.weights.iter().zip(&self.states) {
            if r < *w {
                return s.clone();
            }
            r -= w;
        }
        let last = self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        self.states[last].clone()
    }

    /// Apply a jump to `psi`, choosing the channel ∝ rate·|ψ_upper|².
    fn jump(&self, psi: &mut Vec8, rng: &mut ChaCha8Rng) -> usize {
        let jumps = &self.model.generator.jumps;
        let probs: Vec<f64> = jumps.iter().map(|j| j.rate * psi[j.upper].norm_sqr()).collect();
        let total: f64 = probs.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut chosen = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            if r < *p {
                chosen = i;
                break;
            }
            r -= p;
        }
        let j = jumps[chosen];
        *psi = Vec8::zeros();
        psi[j.lower] = C64::new(1.0, 0.0);
        chosen
    }

    /// One sequence. Calls `sample(k, psi)` at each sample time.
    fn sequence(
        &self,
        index: u64,
        rng: &mut ChaCha8Rng,
        events: &mut Vec<EmissionEvent>,
        mut sample: impl FnMut(usize, &Vec8),
    ) {
        let detected = |c: usize| self.model.generator.jumps[c].detected;
        let mut psi = self.initial_state(rng);
        let mut threshold: f64 = rng.random();
        for piece in &self.pieces {
            let depth = piece.ladder.len() - 1;
            let units = 1usize << depth;
            let unit = (piece.end - piece.start) / units as f64;
            let mut pos = 0usize;
            while pos < units {
                // largest aligned step that fits
                let mut level = if pos == 0 { 0 } else { depth - pos.trailing_zeros() as usize };
                loop {
                    let len = units >> level;
                    let next = piece.ladder[level] * psi;
                    let n1 = next.norm_squared();
                    if n1 > threshold {
                        psi = next;
                        pos += len;
                        break;
                    }
                    if level == depth {
                        // crossing inside the finest step: interpolate log-norm
                        let n0 = psi.norm_squared();
                        let frac = if n0 > n1 && n1 > 0.0 {
                            ((n0 / threshold).ln() / (n0 / n1).ln()).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        let t = piece.start + (pos as f64 + frac) * unit;
                        psi = next;
                        let channel = self.jump(&mut psi, rng);
                        events.push(EmissionEvent {
                            sequence_index: index,
                            time: t,
                            channel,
                            detected: detected(channel),
                        });
                        threshold = rng.random();
                        pos += len;
                        break;
                    }
                    level += 1;
                }
            }
            if let Some(k) = piece.sample {
                sample(k, &psi);
            }
        }
    }

    fn rng(seed: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        rng
    }

    /// Run sequences `0..n_sequences`. Each sequence draws from its own
    /// random stream, so the result does not depend on thread count.
    pub fn run(&self, n_sequences: u64, seed: u64, detected_only: bool) -> Vec<EmissionEvent> {
        let chunks: Vec<Vec<EmissionEvent>> = (0..n_sequences)
            .into_par_iter()
            .map(|i| {
                let mut rng = Self::rng(seed, i);
                let mut ev = Vec::new();
                self.sequence(i, &mut rng, &mut ev, |_, _| {});
                if detected_only {
                    ev.retain(|e| e.detected);
                }
                ev
            })
            .collect();
        chunks.into_iter().flatten().collect()
    }

    /// Like [`run`](Self::run), also averaging the conditional manifold
    /// populations at the sample times.
    pub fn run_with_populations(&self, n_sequences: u64, seed: u64) -> TrajectoryOutput {
        let m = self.sample_times.len();
        let per: Vec<(Vec<EmissionEvent>, Vec<[f64; 3]>)> = (0..n_sequences)
            .into_par_iter()
            .map(|i| {
                let mut rng = Self::rng(seed, i);
                let mut ev = Vec::new();
                let mut pops = vec![[0.0; 3]; m];
                self.sequence(i, &mut rng, &mut ev, |k, psi| pops[k] = manifolds(psi));
                (ev, pops)
            })
            .collect();
        let mut sum = vec![[0.0; 3]; m];
        let mut sum2 = vec![[0.0; 3]; m];
        let mut events = Vec::new();
        for (ev, pops) in per {
            events.extend(ev);
            for k in 0..m {
                for c in 0..3 {
                    sum[k][c] += pops[k][c];
                    sum2[k][c] += pops[k][c] * pops[k][c];
                }
            }
        }
        let n = n_sequences as f64;
        let mean: Vec<[f64; 3]> = sum.iter().map(|s| s.map(|x| x / n)).collect();
        let stderr = (0..m)
            .map(|k| {
                std::array::from_fn(|c| {
                    let var = (sum2[k][c] / n - mean[k][c] * mean[k][c]).max(0.0);
                    (var / (n - 1.0).max(1.0)).sqrt()
                })
            })
            .collect();
        TrajectoryOutput {
            events,
            populations: Some(PopulationAverage {
                times: self.sample_times.clone(),
                mean,
                stderr,
            }),
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }
}

impl Model {
    /// Quantum-jump trajectories of `n_sequences` independent sequences,
    /// each starting at time 0 from the cyclic state.
    pub fn quantum_jump_trajectories(
        &self,
        run: &SequenceRun,
        n_sequences: u64,
        seed: u64,
    ) -> Result<Vec<EmissionEvent>> {
        if n_sequences == 0 {
            return Err(Error::Invalid("n_sequences must be at least 1".into()));
        }
        Ok(JumpSimulator::new(self, run, 0.0, &[])?.run(n_sequences, seed, false))
    }
}
