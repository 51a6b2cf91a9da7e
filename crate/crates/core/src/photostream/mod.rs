//! Detector model and time-tag streams.
//!
//! Emission events become clicks through a scalar efficiency, Gaussian
//! timing jitter, floor quantization to the timestamp resolution, uniform
//! dark counts inside the gate windows, and gating.

pub mod io;

use crate::dynamics::EmissionEvent;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Probability that an emitted detected-channel photon produces a click.
    pub efficiency: f64,
    /// Dark counts per ns.
    pub dark_rate: f64,
    /// (start, end) ns within the period.
    pub gate_windows: Vec<(f64, f64)>,
    /// Gaussian timing smear, ns.
    pub jitter_sigma: f64,
    /// Timestamp quantum, ns.
    pub resolution: f64,
}

impl DetectorModel {
    pub fn validate(&self, period: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Invalid(format!("efficiency {} outside [0, 1]", self.efficiency)));
        }
        if !(self.dark_rate >= 0.0) || !(self.jitter_sigma >= 0.0) {
            return Err(Error::Invalid("dark_rate and jitter_sigma must be >= 0".into()));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::Invalid("resolution must be positive".into()));
        }
        let mut gates = self.gate_windows.clone();
        gates.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(a, b)) in gates.iter().enumerate() {
            if !(a >= 0.0 && b > a && b <= period) {
                return Err(Error::Invalid(format!(
                    "gate_windows: window ({a}, {b}) must satisfy 0 <= start < end <= {period}"
                )));
            }
            if i > 0 && a < gates[i - 1].1 {
                return Err(Error::Invalid(format!(
                    "gate_windows: windows ({}, {}) and ({a}, {b}) overlap",
                    gates[i - 1].0,
                    gates[i - 1].1
                )));
            }
        }
        Ok(())
    }

    pub fn in_gate(&self, t: f64) -> bool {
        self.gate_windows.iter().any(|&(a, b)| t >= a && t < b)
    }

    pub fn gated_time(&self) -> f64 {
        self.gate_windows.iter().map(|(a, b)| b - a).sum()
    }
}

/// Stream-wide facts needed to interpret the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub detector_id: u8,
    pub sequences: u64,
    pub repetition_period: f64,
    pub resolution: f64,
    pub digest: String,
}

impl StreamMetadata {
    /// Period in resolution ticks; the period must be a whole number of ticks.
    pub fn period_ticks(&self) -> Result<u64> {
        let p = self.repetition_period / self.resolution;
        if !(p >= 1.0) || (p - p.round()).abs() > 1e-6 {
            return Err(Error::Invalid(format!(
                "repetition period {} ns is not a multiple of the resolution {} ns",
                self.repetition_period, self.resolution
            )));
        }
        Ok(p.round() as u64)
    }

    /// True when two streams can be correlated against each other.
    pub fn compatible(&self, other: &Self) -> bool {
        self.sequences == other.sequences
            && self.repetition_period == other.repetition_period
            && self.resolution == other.resolution
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub sequence_index: u64,
    /// Timestamp within the sequence in units of the resolution.
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub meta: StreamMetadata,
    /// Sorted by (sequence_index, ticks).
    pub records: Vec<TimeTag>,
}

impl TimeTagStream {
    pub fn empty(meta: StreamMetadata) -> Self {
        Self { meta, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn timestamp_ns(&self, r: &TimeTag) -> f64 {
        r.ticks as f64 * self.meta.resolution
    }

    /// Absolute click times in ticks since the start of sequence 0.
    pub fn absolute_ticks(&self) -> Result<Vec<u64>> {
        let p = self.meta.period_ticks()?;
        Ok(self.records.iter().map(|r| r.sequence_index * p + r.ticks).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.meta.period_ticks()?;
        if self.records.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Format("records are not sorted by (sequence, timestamp)".into()));
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| r.ticks >= p || r.sequence_index >= self.meta.sequences)
        {
            return Err(Error::Format(format!("record {r:?} lies outside the stream")));
        }
        Ok(())
    }
}

/// Random stream ids: signal draws and dark counts of each sequence use
/// separate ChaCha streams so that changing one never shifts the other.
fn sequence_rng(seed: u64, sequence: u64, kind: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * sequence + kind);
    rng
}

fn keep(det: &DetectorModel, period_ticks: u64, out: &mut Vec<TimeTag>, seq: u64, t: f64) {
    let ticks = (t / det.resolution).floor();
    if ticks >= 0.0 && ticks < period_ticks as f64 && det.in_gate(ticks * det.resolution) {
        out.push(TimeTag { sequence_index: seq, ticks: ticks as u64 });
    }
}

fn check_resolution(det: &DetectorModel, meta: &StreamMetadata) -> Result<u64> {
    det.validate(meta.repetition_period)?;
    if det.resolution != meta.resolution {
        return Err(Error::Mismatch(format!(
            "detector resolution {} differs from stream resolution {}",
            det.resolution, meta.resolution
        )));
    }
    meta.period_ticks()
}

fn darks(det: &DetectorModel, period_ticks: u64, seed: u64, seq: u64, out: &mut Vec<TimeTag>) {
    if det.dark_rate > 0.0 {
        let mut rng = sequence_rng(seed, seq, 1);
        for &(a, b) in &det.gate_windows {
            let mean = det.dark_rate * (b - a);
            let n = Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
            for _ in 0..n {
                let t = a + rng.random::<f64>() * (b - a);
                keep(det, period_ticks, out, seq, t);
            }
        }
    }
}

/// Turn emission events (sorted by sequence, then time) into clicks.
///
/// Every event consumes one uniform and one normal draw whether or not it
/// is detected-channel or kept, so for a fixed seed a higher efficiency
/// keeps a superset of the clicks kept at lower efficiency.
pub fn detect(
    events: &[EmissionEvent],
    det: &DetectorModel,
    meta: StreamMetadata,
    seed: u64,
) -> Result<TimeTagStream> {
    let period_ticks = check_resolution(det, &meta)?;
    let jitter = Normal::new(0.0, det.jitter_sigma.max(0.0)).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut records = Vec::new();
    let mut idx = 0;
    for seq in 0..meta.sequences {
        let start = records.len();
        let mut rng = sequence_rng(seed, seq, 0);
        while idx < events.len() && events[idx].sequence_index < seq {
            idx += 1;
        }
        while idx < events.len() && events[idx].sequence_index == seq {
            let e = &events[idx];
            let u: f64 = rng.random();
            let dt = if det.jitter_sigma > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
            if e.detected && u < det.efficiency {
                keep(det, period_ticks, &mut records, seq, e.time + dt);
            }
            idx += 1;
        }
        darks(det, period_ticks, seed, seq, &mut records);
        records[start..].sort_unstable();
    }
    Ok(TimeTagStream { meta, records })
}

/// Add the detector's dark counts (uniform within its gates) to a stream
/// of photon clicks.
pub fn add_dark_counts(stream: &TimeTagStream, det: &DetectorModel, seed: u64) -> Result<TimeTagStream> {
    let period_ticks = check_resolution(det, &stream.meta)?;
    let mut records = Vec::with_capacity(stream.len());
    let mut idx = 0;
    for seq in 0..stream.meta.sequences {
        let start = records.len();
        while idx < stream.records.len() && stream.records[idx].sequence_index == seq {
            records.push(stream.records[idx]);
            idx += 1;
        }
        darks(det, period_ticks, seed, seq, &mut records);
        records[start..].sort_unstable();
    }
    Ok(TimeTagStream {
        meta: stream.meta.clone(),
        records,
    })
}

/// Route every click independently to one of two outputs of a 50/50 beam
/// splitter (detector ids 0 and 1).
pub fn split_hbt(stream: &TimeTagStream, seed: u64) -> (TimeTagStream, TimeTagStream) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = TimeTagStream::empty(StreamMetadata { detector_id: 0, ..stream.meta.clone() });
    let mut b = TimeTagStream::empty(StreamMetadata { detector_id: 1, ..stream.meta.clone() });
    for r in &stream.records {
        if rng.random::<bool>() {
            b.records.push(*r);
        } else {
            a.records.push(*r);
        }
    }
    (a, b)
}

/// Merge two streams into one (e.g. the two inputs of a beam splitter
/// feeding one detector). Metadata must agree.
pub fn merge(a: &TimeTagStream, b: &TimeTagStream, detector_id: u8) -> Result<TimeTagStream> {
    if !a.meta.compatible(&b.meta) {
        return Err(Error::Mismatch("streams differ in sequences, period or resolution".into()));
    }
    let mut records = Vec::with_capacity(a.len() + b.len());
    records.extend_from_slice(&a.records);
    records.extend_from_slice(&b.records);
    records.sort_unstable();
    Ok(TimeTagStream {
        meta: StreamMetadata { detector_id, ..a.meta.clone() },
        records,
    })
}
