//! First-order coherence of the detected photons.
//!
//! g1(τ) = ∫G(t,t+τ)dt / ∫n(t)dt, with t and t+τ inside the emission
//! window. The |g1| envelope is fitted with an
//! exponential by iteratively reweighted least squares in which points
//! below the current fit (the beat nodes) are down-weighted; the beat
//! frequency is the strongest non-zero FFT component of |g1| after the
//! envelope is subtracted.

use super::fit::{fit_exponential_tail, ExpFit, FitWindow, Weighting};
use crate::dynamics::TwoTimeCorrelation;
use crate::error::{Error, Result};
use crate::C64;
use rustfft::FftPlanner;

#[derive(Debug, Clone, PartialEq)]
pub struct G1Summary {
    pub tau: Vec<f64>,
    pub g1: Vec<C64>,
    /// Exponential fit of the |g1| envelope; `t1` of the fit is T2.
    pub envelope: ExpFit,
    pub t2: f64,
    pub t2_stderr: f64,
    /// Strongest modulation frequency of |g1|, MHz.
    pub beat_mhz: f64,
    /// Frequency resolution of the FFT, MHz.
    pub fft_bin_mhz: f64,
    /// Normalized FFT magnitude of |g1| minus its envelope, per bin
    /// (frequency MHz, magnitude).
    pub modulation_spectrum: Vec<(f64, f64)>,
}

pub fn g1_values(g: &TwoTimeCorrelation) -> Result<Vec<C64>> {
    let norm: f64 = (0..g.grid.n_t).map(|j| g.n(j)).sum();
    if !(norm > 0.0) {
        return Err(Error::Fit("no emission on the correlation grid".into()));
    }
    Ok((0..g.grid.n_tau)
        .map(|k| g.gated_rows(k).map(|j| g.g(j, k)).sum::<C64>() / norm)
        .collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust envelope fit of |g1| over the window.
pub fn envelope_fit(tau: &[f64], mag: &[f64], window: (f64, f64)) -> Result<ExpFit> {
    let mut w = vec![1.0; tau.len()];
    let mut fit = fit_exponential_tail(tau, mag, Some(&w), Weighting::Relative, FitWindow::Absolute(window.0, window.1))?;
    for _ in 0..50 {
        let r: Vec<(usize, f64)> = tau
            .iter()
            .enumerate()
            .filter(|(i, t)| **t >= window.0 && **t <= window.1 && mag[*i] > 0.0)
            .map(|(i, t)| (i, mag[i].ln() - (fit.log_amplitude - fit.gamma * t)))
            .collect();
        let s = (1.4826 * median(r.iter().map(|x| x.1.abs()).collect())).max(1e-12);
        for &(i, ri) in &r {
            w[i] = if ri >= 0.0 { 1.0 } else { 1.0 / (1.0 + (ri / s).powi(2)) };
        }
        let next = fit_exponential_tail(tau, mag, Some(&w), Weighting::Relative, FitWindow::Absolute(window.0, window.1))?;
        let settled = (next.gamma - fit.gamma).abs() <= 1e-10 * fit.gamma;
        fit = next;
        if settled {
            break;
        }
    }
    Ok(fit)
}

/// g1, envelope T2 fitted over `window` (ns of delay), and beat frequency.
pub fn g1_summary(g: &TwoTimeCorrelation, window: (f64, f64)) -> Result<G1Summary> {
    let g1 = g1_values(g)?;
    let tau: Vec<f64> = (0..g.grid.n_tau).map(|k| g.grid.tau(k)).collect();
    let mag: Vec<f64> = g1.iter().map(|z| z.norm()).collect();
    let envelope = envelope_fit(&tau, &mag, window)?;

    let n = tau.len();
    let mut buf: Vec<C64> = tau
        .iter()
        .zip(&mag)
        .map(|(t, m)| C64::new(m - (envelope.log_amplitude - envelope.gamma * t).exp(), 0.0))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let df = 1e3 / (n as f64 * g.grid.step);
    let spec: Vec<f64> = buf.iter().map(|z| z.norm() / n as f64).collect();
    let half = n / 2;
    let peak = (1..=half.max(1).min(n - 1))
        .max_by(|&a, &b| spec[a].total_cmp(&spec[b]))
        .ok_or_else(|| Error::Fit("delay grid too short for a spectrum".into()))?;
    // parabolic refinement between neighbouring bins
    let shift = if peak > 1 && peak + 1 < n {
        let (a, b, c) = (spec[peak - 1], spec[peak], spec[peak + 1]);
        let d = a - 2.0 * b + c;
        if d.abs() > 0.0 { (0.5 * (a - c) / d).clamp(-0.5, 0.5) } else { 0.0 }
    } else {
        0.0
    };
    Ok(G1Summary {
        t2: envelope.t1,
        t2_stderr: envelope.t1_stderr,
        envelope,
        beat_mhz: (peak as f64 + shift) * df,
        fft_bin_mhz: df,
        modulation_spectrum: (0..=half).map(|k| (k as f64 * df, spec[k])).collect(),
        tau,
        g1,
    })
}
