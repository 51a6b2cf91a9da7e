//! Photon arrival-time distributions relative to the emission trigger.

use super::fit::{fit_exponential_tail, ExpFit, FitWindow, Weighting};
use crate::error::{Error, Result};
use crate::photostream::TimeTagStream;

#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketEstimate {
    pub bin: f64,
    /// Left bin edges, ns after the trigger.
    pub tau: Vec<f64>,
    pub counts: Vec<u64>,
    /// counts / (sequences · bin), clicks per ns per sequence.
    pub rate: Vec<f64>,
    pub rate_errors: Vec<f64>,
    pub fit: Option<ExpFit>,
}

impl WavepacketEstimate {
    /// Fit the exponential tail with Poisson weights; the result is stored.
    pub fn fit_tail(&mut self, window: FitWindow) -> Result<&ExpFit> {
        let counts: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        let centres: Vec<f64> = self.tau.iter().map(|t| t + 0.5 * self.bin).collect();
        let fit = fit_exponential_tail(&centres, &self.rate, Some(&counts), Weighting::Poisson, window)?;
        Ok(self.fit.insert(fit))
    }
}

/// Histogram of (timestamp − trigger_offset) mod period over
/// [0, window) after the trigger. An empty stream yields no bins.
pub fn arrival_histogram(stream: &TimeTagStream, trigger_offset: f64, window: f64, bin: f64) -> Result<WavepacketEstimate> {
    if !(bin > 0.0) || !(window > 0.0) {
        return Err(Error::Invalid("arrival histogram needs positive bin and window".into()));
    }
    if stream.is_empty() {
        return Ok(WavepacketEstimate {
            bin,
            tau: Vec::new(),
            counts: Vec::new(),
            rate: Vec::new(),
            rate_errors: Vec::new(),
            fit: None,
        });
    }
    let period = stream.meta.repetition_period;
    let nb = (window / bin).ceil() as usize;
    let mut counts = vec![0u64; nb];
    for r in &stream.records {
        let d = (stream.timestamp_ns(r) - trigger_offset).rem_euclid(period);
        if d < window {
            let k = (d / bin).floor() as usize;
            if k < nb {
                counts[k] += 1;
            }
        }
    }
    let norm = stream.meta.sequences as f64 * bin;
    Ok(WavepacketEstimate {
        bin,
        tau: (0..nb).map(|k| k as f64 * bin).collect(),
        rate: counts.iter().map(|&c| c as f64 / norm).collect(),
        rate_errors: counts.iter().map(|&c| (c as f64).sqrt() / norm).collect(),
        counts,
        fit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photostream::{StreamMetadata, TimeTag};

    #[test]
    fn record_at_trigger_lands_in_first_bin() {
        let s = TimeTagStream {
            meta: StreamMetadata {
                detector_id: 0,
                sequences: 1,
                repetition_period: 2000.0,
                resolution: 1.0,
                digest: String::new(),
            },
            records: vec![TimeTag { sequence_index: 0, ticks: 1500 }],
        };
        let wp = arrival_histogram(&s, 1500.0, 500.0, 10.0).unwrap();
        assert_eq!(wp.counts[0], 1);
        assert_eq!(wp.counts.iter().sum::<u64>(), 1);
        assert!((wp.rate[0] - 0.1).abs() < 1e-15);
    }
}
