//! Full coincidence model for the two-source experiment: cross-source
//! pairs with interference, same-source photon pairs, and dark counts.
//!
//! Detectors c and d sit behind the beam splitter; each source photon
//! reaches a given detector with probability η/2. Dark counts are uniform
//! over the gate, which is taken to be the emission window of the
//! correlation grid. All densities are per ns per sequence.

use super::hom::{check_grids, mirror, one_sided};
use crate::dynamics::TwoTimeCorrelation;
use crate::error::{Error, Result};

/// Dark counts per ns of detectors c and d.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DarkModel {
    pub rates: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceModel {
    pub tau: Vec<f64>,
    pub step: f64,
    pub overlap: f64,
    /// Cross-source pairs without interference.
    pub cross: Vec<f64>,
    /// Interference reduction at overlap 1 (subtract overlap × this).
    pub interference: Vec<f64>,
    /// Same-source photon pairs.
    pub doubles: Vec<f64>,
    pub signal_dark: Vec<f64>,
    pub dark_dark: Vec<f64>,
    /// Product of single-detector rates: the uncorrelated expectation.
    pub expected: Vec<f64>,
    pub dark: DarkModel,
}

/// Which of the two experiments a calibration refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// Orthogonal polarizations (overlap 0).
    Distinguishable,
    /// Polarizations with the model's overlap.
    Indistinguishable,
}

/// Contributions integrated over a delay window, with fractions of the
/// distinguishable (ni) and overlapping (int) totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub half_width: f64,
    pub cross: f64,
    pub interference: f64,
    pub doubles: f64,
    pub signal_dark: f64,
    pub dark_dark: f64,
    pub total_ni: f64,
    pub total_int: f64,
    pub signal_dark_fraction_ni: f64,
    pub dark_dark_fraction_ni: f64,
    pub doubles_fraction_ni: f64,
    pub signal_dark_fraction_int: f64,
    pub dark_dark_fraction_int: f64,
    pub doubles_fraction_int: f64,
    /// 1 − total_int / total_ni.
    pub contrast: f64,
}

impl Budget {
    pub fn dark_fraction_ni(&self) -> f64 {
        self.signal_dark_fraction_ni + self.dark_dark_fraction_ni
    }

    pub fn dark_fraction_int(&self) -> f64 {
        self.signal_dark_fraction_int + self.dark_dark_fraction_int
    }

    pub fn dark_fraction(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Distinguishable => self.dark_fraction_ni(),
            Arm::Indistinguishable => self.dark_fraction_int(),
        }
    }

    /// Background (non-interference) contributions as fractions of the
    /// distinguishable total.
    pub fn background_fraction_ni(&self) -> f64 {
        self.signal_dark_fraction_ni + self.dark_dark_fraction_ni + self.doubles_fraction_ni
    }
}

impl CoincidenceModel {
    /// `efficiency` = (η_a, η_b); `doubles` = one-sided densities p(τ_k),
    /// k = 0..n_tau, of ordered same-source photon pairs per sequence for
    /// source a and b (before detection).
    pub fn build(
        a: &TwoTimeCorrelation,
        b: &TwoTimeCorrelation,
        overlap: f64,
        efficiency: (f64, f64),
        doubles: (&[f64], &[f64]),
        dark: DarkModel,
    ) -> Result<Self> {
        check_grids(a, b)?;
        let g = a.grid;
        if doubles.0.len() != g.n_tau || doubles.1.len() != g.n_tau {
            return Err(Error::Mismatch("same-source pair densities do not match the delay grid".into()));
        }
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::Invalid(format!("overlap {overlap} outside [0, 1]")));
        }
        let (ea, eb) = efficiency;
        let (cross, interf) = one_sided(a, b);
        let cross: Vec<f64> = cross.iter().map(|c| c * ea * eb).collect();
        let interf: Vec<f64> = interf.iter().map(|c| c * ea * eb).collect();
        let dbl: Vec<f64> = (0..g.n_tau)
            .map(|k| 0.25 * (ea * ea * doubles.0[k] + eb * eb * doubles.1[k]))
            .collect();

        // single-detector signal rate inside the gate
        let r: Vec<f64> = (0..g.n_t).map(|i| 0.5 * (ea * a.n(i) + eb * b.n(i))).collect();
        let [dc, dd] = dark.rates;
        let window = g.n_t as f64 * g.step;
        let k_max = g.n_tau as i64 - 1;
        let mut signal_dark = Vec::with_capacity(2 * g.n_tau - 1);
        let mut dark_dark = Vec::with_capacity(2 * g.n_tau - 1);
        let mut expected = Vec::with_capacity(2 * g.n_tau - 1);
        for k in -k_max..=k_max {
            // c at t_j, d at t_j + τ_k, both inside the gate
            let mut sd = 0.0;
            let mut rr = 0.0;
            for j in 0..g.n_t as i64 {
                let jd = j + k;
                if jd < 0 || jd >= g.n_t as i64 {
                    continue;
                }
                let (rc, rd) = (r[j as usize], r[jd as usize]);
                rr += rc * rd;
                sd += rc * dd + dc * rd;
            }
            let ddk = dc * dd * (window - k.unsigned_abs() as f64 * g.step).max(0.0);
            signal_dark.push(sd * g.step);
            dark_dark.push(ddk);
            expected.push(rr * g.step + sd * g.step + ddk);
        }
        Ok(Self {
            tau: (-k_max..=k_max).map(|i| i as f64 * g.step).collect(),
            step: g.step,
            overlap,
            cross: mirror(&cross),
            interference: mirror(&interf),
            doubles: mirror(&dbl),
            signal_dark,
            dark_dark,
            expected,
            dark,
        })
    }

    pub fn background(&self, i: usize) -> f64 {
        self.doubles[i] + self.signal_dark[i] + self.dark_dark[i]
    }

    pub fn total_ni(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|i| self.cross[i] + self.background(i)).collect()
    }

    pub fn total_int(&self) -> Vec<f64> {
        (0..self.tau.len())
            .map(|i| self.cross[i] - self.overlap * self.interference[i] + self.background(i))
            .collect()
    }

    /// Sum fine-grid densities into bins of `bin` ns centred on multiples
    /// of `bin`: returns (centres, ni, int, expected) as counts per sequence.
    pub fn binned(&self, bin: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let ni = self.total_ni();
        let int = self.total_int();
        let kmax = (self.tau.last().copied().unwrap_or(0.0) / bin).floor() as i64;
        let nb = (2 * kmax + 1) as usize;
        let mut out = (
            (-kmax..=kmax).map(|k| k as f64 * bin).collect::<Vec<_>>(),
            vec![0.0; nb],
            vec![0.0; nb],
            vec![0.0; nb],
        );
        for (i, t) in self.tau.iter().enumerate() {
            let m = (t.abs() / bin + 0.5).floor() as i64 * if *t < 0.0 { -1 } else { 1 };
            if m.abs() > kmax {
                continue;
            }
            let b = (m + kmax) as usize;
            out.1[b] += ni[i] * self.step;
            out.2[b] += int[i] * self.step;
            out.3[b] += self.expected[i] * self.step;
        }
        out
    }

    /// accidentals budget over |τ| ≤ half_width.
    pub fn budget(&self, half_width: f64) -> Budget {
        let mut s = [0.0; 5];
        for (i, t) in self.tau.iter().enumerate() {
            if t.abs() <= half_width + 1e-9 {
                s[0] += self.cross[i] * self.step;
                s[1] += self.interference[i] * self.step;
                s[2] += self.doubles[i] * self.step;
                s[3] += self.signal_dark[i] * self.step;
                s[4] += self.dark_dark[i] * self.step;
            }
        }
        let [cross, interference, doubles, signal_dark, dark_dark] = s;
        let total_ni = cross + doubles + signal_dark + dark_dark;
        let total_int = total_ni - self.overlap * interference;
        let frac = |x: f64, t: f64| if t > 0.0 { x / t } else { 0.0 };
        Budget {
            half_width,
            cross,
            interference,
            doubles,
            signal_dark,
            dark_dark,
            total_ni,
            total_int,
            signal_dark_fraction_ni: frac(signal_dark, total_ni),
            dark_dark_fraction_ni: frac(dark_dark, total_ni),
            doubles_fraction_ni: frac(doubles, total_ni),
            signal_dark_fraction_int: frac(signal_dark, total_int),
            dark_dark_fraction_int: frac(dark_dark, total_int),
            doubles_fraction_int: frac(doubles, total_int),
            contrast: if total_ni > 0.0 { 1.0 - total_int / total_ni } else { 0.0 },
        }
    }

    /// Equal dark rate on both detectors for which dark-related
    /// coincidences make up `target` of the total of `arm` over
    /// |τ| ≤ half_width. The signal-dark part is linear and the dark-dark
    /// part quadratic in the rate, so the equation is a quadratic. The
    /// model must have been built with equal, non-zero dark rates.
    pub fn dark_rate_for_fraction(&self, half_width: f64, target: f64, arm: Arm) -> Result<f64> {
        if !(0.0..1.0).contains(&target) {
            return Err(Error::Invalid(format!("dark fraction {target} outside [0, 1)")));
        }
        let [dc, dd] = self.dark.rates;
        if !(dc > 0.0) || dc != dd {
            return Err(Error::Invalid("calibration needs equal non-zero dark rates in the model".into()));
        }
        let b = self.budget(half_width);
        let lin = b.signal_dark / dc;
        let quad = b.dark_dark / (dc * dc);
        let signal = match arm {
            Arm::Distinguishable => b.cross + b.doubles,
            Arm::Indistinguishable => b.cross - self.overlap * b.interference + b.doubles,
        };
        let c = target / (1.0 - target) * signal;
        if quad > 0.0 {
            Ok((-lin + (lin * lin + 4.0 * quad * c).sqrt()) / (2.0 * quad))
        } else if lin > 0.0 {
            Ok(c / lin)
        } else {
            Err(Error::Invalid("no dark coincidences inside the window".into()))
        }
    }

    /// The same model with both dark rates set to `rate`.
    pub fn with_dark_rate(&self, rate: f64) -> Result<Self> {
        let [dc, dd] = self.dark.rates;
        if !(dc > 0.0) || dc != dd {
            return Err(Error::Invalid("rescaling needs equal non-zero dark rates in the model".into()));
        }
        let x = rate / dc;
        let mut m = self.clone();
        for i in 0..m.tau.len() {
            let signal = m.expected[i] - m.signal_dark[i] - m.dark_dark[i];
            m.signal_dark[i] *= x;
            m.dark_dark[i] *= x * x;
            m.expected[i] = signal + m.signal_dark[i] + m.dark_dark[i];
        }
        m.dark = DarkModel { rates: [rate, rate] };
        Ok(m)
    }
}

/// Suppression of coincidences over the window when the distinguishable
/// and the interfering histograms come from separate runs, each with its
/// own dark rate: 1 − total_int(c) / total_ni(b).
pub fn two_run_contrast(ni: &Budget, int: &Budget) -> f64 {
    if ni.total_ni > 0.0 {
        1.0 - int.total_int / ni.total_ni
    } else {
        0.0
    }
}
