//! Two-source coincidence densities behind a 50/50 beam splitter.
//!
//! P(τ) = ¼ ∫ [n_a(t) n_b(t+τ) + n_b(t) n_a(t+τ)
//!            − 2·overlap·Re(G_a*(t,t+τ) G_b(t,t+τ))] dt
//!
//! for photons from source a and b, one per input port, with the
//! coincidence delay τ between the two output detectors. The density is
//! symmetric in τ.

use crate::dynamics::TwoTimeCorrelation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HomModel {
    /// Delays −K·step ..= K·step, ns.
    pub tau: Vec<f64>,
    pub step: f64,
    /// Distinguishable photons (overlap 0), per ns per sequence.
    pub ni: Vec<f64>,
    /// Photons with the given overlap.
    pub int: Vec<f64>,
    pub overlap: f64,
}

impl HomModel {
    pub fn central(&self) -> usize {
        self.tau.len() / 2
    }

    /// ∫ over |τ| ≤ half_width of (ni, int).
    pub fn window_sums(&self, half_width: f64) -> (f64, f64) {
        let mut s = (0.0, 0.0);
        for (i, t) in self.tau.iter().enumerate() {
            if t.abs() <= half_width + 1e-9 {
                s.0 += self.ni[i] * self.step;
                s.1 += self.int[i] * self.step;
            }
        }
        s
    }
}

pub(crate) fn check_grids(a: &TwoTimeCorrelation, b: &TwoTimeCorrelation) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Mismatch(format!(
            "correlation grids differ: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    Ok(())
}

/// Sum-of-products and interference parts for τ = k·step, k ≥ 0, with
/// both photons inside the emission window.
pub(crate) fn one_sided(a: &TwoTimeCorrelation, b: &TwoTimeCorrelation) -> (Vec<f64>, Vec<f64>) {
    let g = a.grid;
    let mut cross = vec![0.0; g.n_tau];
    let mut interf = vec![0.0; g.n_tau];
    for k in 0..g.n_tau {
        let mut c = 0.0;
        let mut x = 0.0;
        for j in a.gated_rows(k) {
            c += a.n(j) * b.n(j + k) + b.n(j) * a.n(j + k);
            x += (a.g(j, k).conj() * b.g(j, k)).re;
        }
        cross[k] = 0.25 * c * g.step;
        interf[k] = 0.5 * x * g.step;
    }
    (cross, interf)
}

pub(crate) fn mirror(v: &[f64]) -> Vec<f64> {
    v.iter().skip(1).rev().chain(v.iter()).copied().collect()
}

pub fn hom_coincidence_model(a: &TwoTimeCorrelation, b: &TwoTimeCorrelation, overlap: f64) -> Result<HomModel> {
    check_grids(a, b)?;
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::Invalid(format!("overlap {overlap} outside [0, 1]")));
    }
    let (cross, interf) = one_sided(a, b);
    let int: Vec<f64> = cross.iter().zip(&interf).map(|(c, i)| c - overlap * i).collect();
    let step = a.grid.step;
    let k = a.grid.n_tau as i64 - 1;
    Ok(HomModel {
        tau: (-k..=k).map(|i| i as f64 * step).collect(),
        step,
        ni: mirror(&cross),
        int: mirror(&int),
        overlap,
    })
}
