//! Level structure of ⁴⁰Ca⁺ (S½, P½, D3/2), dipole geometry, and the
//! Hamiltonian and jump operators that drive the dynamics.
//!
//! Canonical level order:
//!
//! | index | level    |
//! |-------|----------|
//! | 0     | S(−1/2)  |
//! | 1     | S(+1/2)  |
//! | 2     | P(−1/2)  |
//! | 3     | P(+1/2)  |
//! | 4     | D(−3/2)  |
//! | 5     | D(−1/2)  |
//! | 6     | D(+1/2)  |
//! | 7     | D(+3/2)  |
//!
//! Emission polarization labels follow Δm = m_upper − m_lower:
//! Δm = −1 is [`Polarization::SigmaPlus`], Δm = 0 is [`Polarization::Pi`],
//! Δm = +1 is [`Polarization::SigmaMinus`]. The detected photon (right
//! circular along the quantization axis) is the P(−1/2) → S(+1/2) decay,
//! fed by the D(−3/2) and D(+1/2) sublevels under a repump polarized
//! perpendicular to the field.

pub mod angular;

use crate::error::{Error, Result};
use crate::units::{mhz_to_rad_per_ns, MU_B_OVER_H_MHZ_PER_GAUSS};
use crate::{Mat8, C64};
use serde::{Deserialize, Serialize};

pub const N_LEVELS: usize = 8;

pub const S_MINUS: usize = 0;
pub const S_PLUS: usize = 1;
pub const P_MINUS: usize = 2;
pub const P_PLUS: usize = 3;
pub const D_M3: usize = 4;
pub const D_M1: usize = 5;
pub const D_P1: usize = 6;
pub const D_P3: usize = 7;

/// Upper and lower level of the detected decay channel.
pub const DETECTED_CHANNEL: (usize, usize) = (P_MINUS, S_PLUS);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manifold {
    S12,
    P12,
    D32,
}

impl Manifold {
    /// Twice the total angular momentum J.
    pub fn j2(self) -> i32 {
        match self {
            Manifold::S12 | Manifold::P12 => 1,
            Manifold::D32 => 3,
        }
    }

    /// Level indices belonging to this manifold.
    pub fn indices(self) -> std::ops::Range<usize> {
        match self {
            Manifold::S12 => 0..2,
            Manifold::P12 => 2..4,
            Manifold::D32 => 4..8,
        }
    }
}

/// Which manifold and twice-m a canonical index refers to.
pub fn level_quantum_numbers(index: usize) -> (Manifold, i32) {
    match index {
        0 => (Manifold::S12, -1),
        1 => (Manifold::S12, 1),
        2 => (Manifold::P12, -1),
        3 => (Manifold::P12, 1),
        4 => (Manifold::D32, -3),
        5 => (Manifold::D32, -1),
        6 => (Manifold::D32, 1),
        7 => (Manifold::D32, 3),
        _ => panic!("level index {index} out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanLevel {
    pub manifold: Manifold,
    /// Twice the magnetic quantum number.
    pub m2: i32,
    pub index: usize,
    /// g_J m µ_B B / ħ in rad/ns.
    pub zeeman_shift: f64,
}

impl ZeemanLevel {
    pub fn m(&self) -> f64 {
        self.m2 as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    SigmaPlus,
    Pi,
    SigmaMinus,
}

impl Polarization {
    /// Label of an emission channel from Δm = m_upper − m_lower.
    pub fn from_delta_m2(dm2: i32) -> Option<Self> {
        match dm2 {
            -2 => Some(Polarization::SigmaPlus),
            0 => Some(Polarization::Pi),
            2 => Some(Polarization::SigmaMinus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// S½ ↔ P½ at 397 nm.
    Blue397,
    /// D3/2 ↔ P½ at 866 nm.
    Ir866,
}

impl Transition {
    pub fn name(self) -> &'static str {
        match self {
            Transition::Blue397 => "397 nm",
            Transition::Ir866 => "866 nm",
        }
    }

    fn lower(self) -> Manifold {
        match self {
            Transition::Blue397 => Manifold::S12,
            Transition::Ir866 => Manifold::D32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgEntry {
    pub upper: usize,
    pub lower: usize,
    pub polarization: Polarization,
    pub amplitude: f64,
}

/// Dipole amplitudes for every allowed P½ → S½ and P½ → D3/2 channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClebschGordanTable {
    pub entries: Vec<CgEntry>,
}

impl ClebschGordanTable {
    pub fn get(&self, upper: usize, lower: usize) -> Option<&CgEntry> {
        self.entries
            .iter()
            .find(|e| e.upper == upper && e.lower == lower)
    }

    pub fn channels_to(&self, manifold: Manifold) -> impl Iterator<Item = &CgEntry> {
        self.entries
            .iter()
            .filter(move |e| level_quantum_numbers(e.lower).0 == manifold)
    }

    /// Largest |amplitude| among channels to the given lower manifold.
    pub fn strongest(&self, manifold: Manifold) -> f64 {
        self.channels_to(manifold)
            .map(|e| e.amplitude.abs())
            .fold(0.0, f64::max)
    }
}

/// Amplitudes ⟨J_l m_l; 1 q | J_u m_u⟩ with q = m_u − m_l, for each P½
/// sublevel decaying into S½ and into D3/2.
pub fn cg_table() -> ClebschGordanTable {
    let mut entries = Vec::new();
    for lower_manifold in [Manifold::S12, Manifold::D32] {
        for upper in Manifold::P12.indices() {
            let (_, mu2) = level_quantum_numbers(upper);
            for lower in lower_manifold.indices() {
                let (_, ml2) = level_quantum_numbers(lower);
                let q2 = mu2 - ml2;
                let Some(polarization) = Polarization::from_delta_m2(q2) else {
                    continue;
                };
                let amplitude =
                    angular::clebsch_gordan(lower_manifold.j2(), ml2, 2, q2, Manifold::P12.j2(), mu2);
                if amplitude != 0.0 {
                    entries.push(CgEntry {
                        upper,
                        lower,
                        polarization,
                        amplitude,
                    });
                }
            }
        }
    }
    ClebschGordanTable { entries }
}

/// Atomic parameters in internal units (rates in 1/ns, B in gauss).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomModel {
    pub g_s: f64,
    pub g_p: f64,
    pub g_d: f64,
    /// Total P½ decay rate, 1/ns.
    pub gamma_p: f64,
    /// Fraction of P½ decays ending in S½.
    pub branching_s: f64,
    pub b_field: f64,
    pub mu_b_over_h: f64,
    /// Photon frequency splitting (MHz) used by analyses instead of the
    /// computed D-sublevel splitting.
    pub beat_override_mhz: Option<f64>,
}

impl Default for AtomModel {
    fn default() -> Self {
        Self {
            g_s: 2.0,
            g_p: 2.0 / 3.0,
            g_d: 4.0 / 5.0,
            gamma_p: mhz_to_rad_per_ns(24.0),
            branching_s: 0.936,
            b_field: 2.2,
            mu_b_over_h: MU_B_OVER_H_MHZ_PER_GAUSS,
            beat_override_mhz: None,
        }
    }
}

impl AtomModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_p > 0.0 && self.gamma_p.is_finite()) {
            return Err(Error::Invalid(format!(
                "atom.gamma_p must be positive, got {}",
                self.gamma_p
            )));
        }
        if !(self.branching_s > 0.0 && self.branching_s < 1.0) {
            return Err(Error::Invalid(format!(
                "atom.branching_s must lie in (0, 1), got {}",
                self.branching_s
            )));
        }
        if !self.b_field.is_finite() {
            return Err(Error::Invalid("atom.b_field must be finite".into()));
        }
        Ok(())
    }

    pub fn gamma_ps(&self) -> f64 {
        self.branching_s * self.gamma_p
    }

    pub fn gamma_pd(&self) -> f64 {
        self.gamma_p - self.gamma_ps()
    }

    fn g_factor(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::S12 => self.g_s,
            Manifold::P12 => self.g_p,
            Manifold::D32 => self.g_d,
        }
    }

    /// Zeeman shift of a level in rad/ns.
    pub fn zeeman_shift(&self, index: usize) -> f64 {
        let (manifold, m2) = level_quantum_numbers(index);
        mhz_to_rad_per_ns(self.g_factor(manifold) * (m2 as f64 / 2.0) * self.mu_b_over_h * self.b_field)
    }

    /// Frequency difference (MHz) between photons from D(−3/2) and D(+1/2).
    pub fn d_splitting_mhz(&self) -> f64 {
        2.0 * self.g_d * self.mu_b_over_h * self.b_field
    }

    /// The beat frequency analyses should expect: the override when set,
    /// otherwise the computed D-sublevel splitting.
    pub fn expected_beat_mhz(&self) -> f64 {
        self.beat_override_mhz.unwrap_or_else(|| self.d_splitting_mhz())
    }
}

pub fn build_level_table(atom: &AtomModel) -> Vec<ZeemanLevel> {
    (0..N_LEVELS)
        .map(|index| {
            let (manifold, m2) = level_quantum_numbers(index);
            ZeemanLevel {
                manifold,
                m2,
                index,
                zeeman_shift: atom.zeeman_shift(index),
            }
        })
        .collect()
}

/// A laser on one transition. `polarization` holds the spherical
/// components (a₋, a₀, a₊) indexed by the Δm = m_upper − m_lower they drive.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserField {
    pub transition: Transition,
    /// Rabi frequency on the strongest dipole channel, rad/ns.
    pub rabi_peak: f64,
    /// Detuning from the Zeeman-free resonance, rad/ns.
    pub detuning: f64,
    pub polarization: [C64; 3],
}

impl LaserField {
    /// Linear polarization perpendicular to the magnetic field.
    pub fn perpendicular() -> [C64; 3] {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        [C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(a, 0.0)]
    }

    pub fn new(transition: Transition, rabi_peak: f64, detuning: f64) -> Self {
        Self {
            transition,
            rabi_peak,
            detuning,
            polarization: Self::perpendicular(),
        }
    }

    pub fn with_polarization(mut self, polarization: [C64; 3]) -> Self {
        self.polarization = polarization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let norm: f64 = self.polarization.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "{} laser polarization is not normalized (|a|² sum = {norm})",
                self.transition.name()
            )));
        }
        if !self.rabi_peak.is_finite() || self.rabi_peak < 0.0 || !self.detuning.is_finite() {
            return Err(Error::Invalid(format!(
                "{} laser needs a finite non-negative Rabi frequency and finite detuning",
                self.transition.name()
            )));
        }
        Ok(())
    }

    fn component(&self, dm2: i32) -> C64 {
        match dm2 {
            -2 => self.polarization[0],
            0 => self.polarization[1],
            2 => self.polarization[2],
            _ => C64::new(0.0, 0.0),
        }
    }
}

fn detuning_of(lasers: &[LaserField], transition: Transition) -> f64 {
    lasers
        .iter()
        .find(|l| l.transition == transition)
        .map_or(0.0, |l| l.detuning)
}

/// Rotating-frame RWA Hamiltonian (rad/ns).
///
/// Frame: S levels sit at their Zeeman shifts, P levels at −Δ_blue, D levels
/// at −Δ_blue + Δ_ir (plus Zeeman shifts). A missing laser fixes its frame
/// at zero detuning. `scales[i]` multiplies the Rabi frequency of
/// `lasers[i]`.
pub fn build_hamiltonian(atom: &AtomModel, lasers: &[LaserField], scales: &[f64]) -> Result<Mat8> {
    if scales.len() != lasers.len() {
        return Err(Error::Invalid(format!(
            "{} scale factors for {} lasers",
            scales.len(),
            lasers.len()
        )));
    }
    for (i, a) in lasers.iter().enumerate() {
        a.validate()?;
        if lasers[..i].iter().any(|b| b.transition == a.transition) {
            return Err(Error::DuplicateLaser(a.transition.name()));
        }
    }
    if let Some(s) = scales.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Invalid(format!("laser scale {s} outside [0, 1]")));
    }

    let delta_b = detuning_of(lasers, Transition::Blue397);
    let delta_r = detuning_of(lasers, Transition::Ir866);
    let mut h = Mat8::zeros();
    for i in 0..N_LEVELS {
        let offset = match level_quantum_numbers(i).0 {
            Manifold::S12 => 0.0,
            Manifold::P12 => -delta_b,
            Manifold::D32 => -delta_b + delta_r,
        };
        h[(i, i)] = C64::new(offset + atom.zeeman_shift(i), 0.0);
    }

    let cg = cg_table();
    for (laser, &scale) in lasers.iter().zip(scales) {
        let lower = laser.transition.lower();
        let strongest = cg.strongest(lower);
        for e in cg.channels_to(lower) {
            let (_, mu2) = level_quantum_numbers(e.upper);
            let (_, ml2) = level_quantum_numbers(e.lower);
            let coupling =
                laser.component(mu2 - ml2) * (scale * laser.rabi_peak / 2.0 * e.amplitude / strongest);
            h[(e.upper, e.lower)] += coupling;
            h[(e.lower, e.upper)] += coupling.conj();
        }
    }
    Ok(h)
}

/// One spontaneous decay channel, L = √rate |lower⟩⟨upper|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOperator {
    pub upper: usize,
    pub lower: usize,
    /// Channel rate, 1/ns.
    pub rate: f64,
    pub polarization: Polarization,
    /// True only for the designated detection channel.
    pub detected: bool,
}

impl JumpOperator {
    pub fn matrix(&self) -> Mat8 {
        let mut m = Mat8::zeros();
        m[(self.lower, self.upper)] = C64::new(self.rate.sqrt(), 0.0);
        m
    }
}

/// Four P→S channels followed by six P→D channels.
pub fn build_jump_operators(atom: &AtomModel) -> Vec<JumpOperator> {
    let cg = cg_table();
    let mut ops = Vec::with_capacity(10);
    for (manifold, gamma) in [(Manifold::S12, atom.gamma_ps()), (Manifold::D32, atom.gamma_pd())] {
        for e in cg.channels_to(manifold) {
            ops.push(JumpOperator {
                upper: e.upper,
                lower: e.lower,
                rate: gamma * e.amplitude * e.amplitude,
                polarization: e.polarization,
                detected: (e.upper, e.lower) == DETECTED_CHANNEL,
            });
        }
    }
    ops
}
