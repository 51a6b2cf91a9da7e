//! Two-time field correlations by the quantum regression theorem.
//!
//! G(t, t+τ) = Tr[E† Φ_{t→t+τ}(E ρ(t))] with E = √γ_det |S+½⟩⟨P−½|.
//! Φ over one grid step is exp(L·step) where the drive is constant and the
//! integrator applied to the 64 matrix units across ramps; steps with
//! constant drive share one cached propagator.

use super::liouvillian::vectorize;
use super::propagator::Stepper;
use super::master::{Model, SequenceRun};
use crate::error::{Error, Result};
use crate::{Mat8, C64};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;

/// Emission times t_j = start + j·step and delays τ_k = k·step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationGrid {
    pub start: f64,
    pub step: f64,
    pub n_t: usize,
    pub n_tau: usize,
}

impl CorrelationGrid {
    /// Grid covering the emission window [a, b) with delays up to `max_tau`.
    pub fn over(a: f64, b: f64, step: f64, max_tau: f64) -> Self {
        Self {
            start: a,
            step,
            n_t: ((b - a) / step).round() as usize,
            n_tau: (max_tau / step).round() as usize + 1,
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn tau(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || self.n_t == 0 || self.n_tau == 0 {
            return Err(Error::Invalid(format!("degenerate correlation grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeCorrelation {
    pub grid: CorrelationGrid,
    /// G(t_j, t_j + τ_k), row-major in j.
    pub values: Vec<C64>,
    /// n(t_i) on the extended grid i = 0 .. n_t + n_tau − 1.
    pub intensity: Vec<f64>,
    /// ⟨E†E(t) E†E(t+τ)⟩ normal-ordered, when requested.
    pub intensity_correlation: Option<Vec<f64>>,
}

impl TwoTimeCorrelation {
    pub fn g(&self, j: usize, k: usize) -> C64 {
        self.values[j * self.grid.n_tau + k]
    }

    pub fn n(&self, i: usize) -> f64 {
        self.intensity[i]
    }

    /// Emission-time indices j whose partner t_j + τ_k still lies inside
    /// the emission window [t_0, t_{n_t}); pairs reaching beyond it are
    /// outside the detector gate.
    pub fn gated_rows(&self, k: usize) -> std::ops::Range<usize> {
        0..self.grid.n_t.saturating_sub(k)
    }

    pub fn g2(&self, j: usize, k: usize) -> Option<f64> {
        self.intensity_correlation
            .as_ref()
            .map(|v| v[j * self.grid.n_tau + k])
    }

    /// Largest violation of |G(t,t+τ)|² ≤ n(t)·n(t+τ)·(1+1e-6), as an
    /// absolute excess (0 when the bound holds everywhere).
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.grid.n_t {
            for k in 0..self.grid.n_tau {
                let lhs = self.g(j, k).norm_sqr();
                let rhs = self.n(j) * self.n(j + k) * (1.0 + 1e-6);
                worst = worst.max(lhs - rhs - 1e-24);
            }
        }
        worst.max(0.0)
    }
}

fn scales_key(s: (f64, f64)) -> (u64, u64) {
    (s.0.to_bits(), s.1.to_bits())
}

impl Model {
    /// Field correlation of the detected channel at the cyclic steady state
    /// of `run`. With `with_intensity` also returns the same-channel
    /// intensity correlation used for same-source photon pairs.
    pub fn two_time_correlation(
        &self,
        run: &SequenceRun,
        grid: CorrelationGrid,
        with_intensity: bool,
    ) -> Result<TwoTimeCorrelation> {
        grid.validate()?;
        let n_ext = grid.n_t + grid.n_tau - 1;
        let times: Vec<f64> = (0..n_ext).map(|i| grid.t(i)).collect();
        // the run's start state belongs to t = 0 of the period containing start
        let t0 = match &self.sequence {
            Some(seq) => (grid.start / seq.repetition_period).floor() * seq.repetition_period,
            None => 0.0,
        };
        let states = self.states_at(&run.start_state, t0, &times)?;

        // step propagators, one per extended-grid interval
        let mut cache: HashMap<(u64, u64), usize> = HashMap::new();
        let mut unique: Vec<DMatrix<C64>> = Vec::new();
        let mut which = Vec::with_capacity(n_ext);
        let mut stepper = Stepper::new(self);
        for i in 0..n_ext.saturating_sub(1) {
            let (a, b) = (times[i], times[i] + grid.step);
            let idx = match self.drive.constant_on(a, b) {
                Some(s) => match cache.get(&scales_key(s)) {
                    Some(&k) => k,
                    None => {
                        unique.push(stepper.superoperator(a, b)?);
                        cache.insert(scales_key(s), unique.len() - 1);
                        unique.len() - 1
                    }
                },
                None => {
                    unique.push(stepper.superoperator(a, b)?);
                    unique.len() - 1
                }
            };
            which.push(idx);
        }

        let det = *self.generator.detected();
        let (u, l) = (det.upper, det.lower);
        let sq = det.rate.sqrt();
        let intensity: Vec<f64> = states.iter().map(|r| det.rate * r[(u, u)].re).collect();

        let rows: Vec<(Vec<C64>, Vec<f64>)> = (0..grid.n_t)
            .into_par_iter()
            .map(|j| {
                let rho = &states[j];
                // E ρ: row u of ρ moved to row l
                let mut x = Mat8::zeros();
                for c in 0..8 {
                    x[(l, c)] = rho[(u, c)] * sq;
                }
                let mut vx = vectorize(&x);
                // E ρ E† = γ ρ_uu |l⟩⟨l|
                let mut vy: Option<DVector<C64>> = with_intensity.then(|| {
                    let mut y = Mat8::zeros();
                    y[(l, l)] = rho[(u, u)] * det.rate;
                    vectorize(&y)
                });
                let mut g = Vec::with_capacity(grid.n_tau);
                let mut g2 = Vec::with_capacity(if with_intensity { grid.n_tau } else { 0 });
                for k in 0..grid.n_tau {
                    if k > 0 {
                        let p = &unique[which[j + k - 1]];
                        vx = p * &vx;
                        if let Some(v) = vy.as_mut() {
                            *v = p * &*v;
                        }
                    }
                    g.push(vx[l * 8 + u] * sq);
                    if let Some(v) = &vy {
                        g2.push(det.rate * v[u * 8 + u].re);
                    }
                }
                (g, g2)
            })
            .collect();

        let mut values = Vec::with_capacity(grid.n_t * grid.n_tau);
        let mut g2s = Vec::new();
        for (g, g2) in rows {
            values.extend(g);
            g2s.extend(g2);
        }
        Ok(TwoTimeCorrelation {
            grid,
            values,
            intensity,
            intensity_correlation: with_intensity.then_some(g2s),
        })
    }
}
