//! Two-detector correlation histograms.
//!
//! Bins are centred on multiples of the bin width and symmetric about
//! τ = 0: a delay of d ticks with bin width b ticks falls in bin
//! sign(d)·⌊(2|d| + b) / 2b⌋, so mirrored pairs always land in mirrored
//! bins.

use crate::error::{Error, Result};
use crate::photostream::TimeTagStream;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    /// Divided by the uncorrelated-pair expectation.
    PerPairRate,
}

/// Bins k·bin for k = −K..=K with K = round(half_range / bin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub bin: f64,
    pub half_range: f64,
}

impl HistogramSpec {
    pub fn centered(bin: f64, half_range: f64) -> Self {
        Self { bin, half_range }
    }

    pub fn half_bins(&self) -> usize {
        (self.half_range / self.bin).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Bin centres, ns.
    pub tau: Vec<f64>,
    pub counts: Vec<u64>,
    /// √counts.
    pub errors: Vec<f64>,
    pub normalization: Normalization,
    /// Uncorrelated-pair expectation per bin (normalized histograms only).
    pub expected: Option<Vec<f64>>,
}

impl CorrelationHistogram {
    fn new(spec: HistogramSpec, counts: Vec<u64>, normalization: Normalization, expected: Option<Vec<f64>>) -> Self {
        let k = counts.len() / 2;
        let tau = (0..counts.len()).map(|i| (i as f64 - k as f64) * spec.bin).collect();
        Self {
            bin_width: spec.bin,
            tau_min: -(k as f64 + 0.5) * spec.bin,
            tau_max: (k as f64 + 0.5) * spec.bin,
            tau,
            errors: counts.iter().map(|&c| (c as f64).sqrt()).collect(),
            counts,
            normalization,
            expected,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Normalized value per bin: counts / expectation (0 where nothing is
    /// expected); raw counts for raw histograms.
    pub fn normalized(&self) -> Vec<f64> {
        match &self.expected {
            Some(e) => self
                .counts
                .iter()
                .zip(e)
                .map(|(&c, &x)| if x > 0.0 { c as f64 / x } else { 0.0 })
                .collect(),
            None => self.counts.iter().map(|&c| c as f64).collect(),
        }
    }

    /// Index of the bin centred on τ = 0.
    pub fn central(&self) -> usize {
        self.counts.len() / 2
    }

    /// Index of the bin containing τ (ns), if inside the range.
    pub fn index_of(&self, tau: f64) -> Option<usize> {
        let k = (tau / self.bin_width).round() as i64 + self.central() as i64;
        (k >= 0 && (k as usize) < self.counts.len()).then_some(k as usize)
    }
}

#[inline]
fn bin_of(d: i64, b: i64) -> i64 {
    let m = (2 * d.abs() + b) / (2 * b);
    if d < 0 {
        -m
    } else {
        m
    }
}

/// Count pairs (x ∈ a, y ∈ b) with y − x in range. Both inputs sorted.
fn count_pairs(a: &[u64], b: &[u64], bin: i64, half: usize) -> Vec<u64> {
    let nb = 2 * half + 1;
    // |d| < bin·(half + ½)
    let reach = (bin * (2 * half as i64 + 1) - 1) / 2;
    let shard = 1 << 14;
    a.par_chunks(shard)
        .map(|chunk| {
            let mut counts = vec![0u64; nb];
            let first = chunk[0] as i64;
            let mut lo = b.partition_point(|&y| (y as i64) < first - reach);
            for &x in chunk {
                let x = x as i64;
                while lo < b.len() && (b[lo] as i64) < x - reach {
                    lo += 1;
                }
                let mut j = lo;
                while j < b.len() && (b[j] as i64) <= x + reach {
                    let k = bin_of(b[j] as i64 - x, bin);
                    counts[(k + half as i64) as usize] += 1;
                    j += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; nb],
            |mut acc, c| {
                for (a, c) in acc.iter_mut().zip(c) {
                    *a += c;
                }
                acc
            },
        )
}

/// Histogram of all delays t₂ − t₁ (s1 click at t₁, s2 click at t₂) across
/// sequence boundaries. An empty input stream gives an empty histogram.
pub fn cross_correlate(
    s1: &TimeTagStream,
    s2: &TimeTagStream,
    spec: HistogramSpec,
    normalization: Normalization,
) -> Result<CorrelationHistogram> {
    if !s1.meta.compatible(&s2.meta) {
        return Err(Error::Mismatch(
            "streams differ in sequence count, repetition period or resolution".into(),
        ));
    }
    if !(spec.bin > 0.0) || !(spec.half_range >= 0.0) {
        return Err(Error::Invalid("histogram bin must be positive and range non-negative".into()));
    }
    let res = s1.meta.resolution;
    let b = spec.bin / res;
    if (b - b.round()).abs() > 1e-9 || b.round() < 1.0 {
        return Err(Error::Invalid(format!(
            "bin width {} ns is not a multiple of the resolution {res} ns",
            spec.bin
        )));
    }
    if s1.is_empty() || s2.is_empty() {
        return Ok(CorrelationHistogram::new(spec, Vec::new(), normalization, None));
    }
    let bin = b.round() as i64;
    let half = spec.half_bins();
    let a = s1.absolute_ticks()?;
    let c = s2.absolute_ticks()?;
    let counts = count_pairs(&a, &c, bin, half);
    let expected = match normalization {
        Normalization::Raw => None,
        Normalization::PerPairRate => Some(uncorrelated_expectation(s1, s2, bin, half)?),
    };
    Ok(CorrelationHistogram::new(spec, counts, normalization, expected))
}

/// Shifted-sequence expectation: pairs from sequences i and i + m are
/// treated as independent, each pair of sequences contributing the
/// correlation of the two per-sequence timestamp profiles.
fn uncorrelated_expectation(s1: &TimeTagStream, s2: &TimeTagStream, bin: i64, half: usize) -> Result<Vec<f64>> {
    let p = s1.meta.period_ticks()? as usize;
    let n = s1.meta.sequences as f64;
    let size = (2 * p).next_power_of_two();
    let mut h1 = vec![Complex::new(0.0, 0.0); size];
    let mut h2 = vec![Complex::new(0.0, 0.0); size];
    for r in &s1.records {
        h1[r.ticks as usize].re += 1.0;
    }
    for r in &s2.records {
        h2[r.ticks as usize].re += 1.0;
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(size).process(&mut h1);
    planner.plan_fft_forward(size).process(&mut h2);
    let mut c: Vec<Complex<f64>> = h1.iter().zip(&h2).map(|(x, y)| x.conj() * y).collect();
    planner.plan_fft_inverse(size).process(&mut c);
    // profile correlation C(d) = Σ_u h1(u) h2(u + d), integer valued
    let corr = |d: i64| -> f64 {
        if d.unsigned_abs() as usize >= p {
            0.0
        } else {
            (c[d.rem_euclid(size as i64) as usize].re / size as f64).round()
        }
    };
    let nb = 2 * half + 1;
    let reach = (bin * (2 * half as i64 + 1) - 1) / 2;
    let pi = p as i64;
    let mut e = vec![0.0; nb];
    for d in -reach..=reach {
        let k = bin_of(d, bin);
        let mut sum = 0.0;
        // sequence offsets m with |d − m·P| < P
        let m0 = (d as f64 / pi as f64).floor() as i64;
        for m in [m0, m0 + 1] {
            if (m.unsigned_abs() as f64) < n {
                sum += (n - m.unsigned_abs() as f64) * corr(d - m * pi);
            }
        }
        e[(k + half as i64) as usize] += sum / (n * n);
    }
    Ok(e)
}
