//! Shared oracles for the integration tests. Nothing here calls the code
//! under test for the quantity it checks.
#![allow(dead_code)]

use nalgebra::{Matrix4, Vector4};
use rps_core::atom::{AtomModel, D_M1, D_M3, D_P1, D_P3, P_MINUS, P_PLUS};
use rps_core::correlator::{fit_exponential_tail, FitWindow, Weighting};
use rps_core::photostream::TimeTagStream;
use rps_core::pipeline::ScanPoint;
use rps_core::scenario::{parse_scenario, Scenario};
use std::path::PathBuf;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn scenario(name: &str) -> Scenario {
    parse_scenario(scenario_path(name)).expect("shipped scenario parses")
}

/// O(n²) pair count: histogram of t₂ − t₁ in bins of `bin` ticks centred
/// on zero, `half` bins either side.
pub fn brute_force_pairs(a: &[u64], b: &[u64], bin: i64, half: usize) -> Vec<u64> {
    let mut out = vec![0u64; 2 * half + 1];
    for &x in a {
        for &y in b {
            let d = y as i64 - x as i64;
            // round half away from zero, mirror-symmetric edges
            let k = if d >= 0 { (2 * d + bin) / (2 * bin) } else { -((-2 * d + bin) / (2 * bin)) };
            if k.unsigned_abs() as usize <= half {
                out[(k + half as i64) as usize] += 1;
            }
        }
    }
    out
}

pub fn absolute_ticks(s: &TimeTagStream) -> Vec<u64> {
    let period = (s.meta.repetition_period / s.meta.resolution).round() as u64;
    s.records.iter().map(|r| r.sequence_index * period + r.ticks).collect()
}

/// Squared CG weights of the σ± IR channels (upper P, lower D, weight).
/// Textbook J = 3/2 → J' = 1/2 relative line strengths: stretched 1/2,
/// the other σ component 1/6.
const IR_SIGMA: [(usize, usize, f64); 4] = [
    (P_MINUS, D_M3, 0.5),
    (P_MINUS, D_P1, 1.0 / 6.0),
    (P_PLUS, D_M1, 1.0 / 6.0),
    (P_PLUS, D_P3, 0.5),
];

/// Decay of P(m) into the four D sublevels, each row sums to 1.
fn p_to_d(p: usize) -> [f64; 4] {
    if p == P_MINUS {
        [0.5, 1.0 / 3.0, 1.0 / 6.0, 0.0]
    } else {
        [0.0, 1.0 / 6.0, 1.0 / 3.0, 0.5]
    }
}

/// Raman decay of the emission phase with the P manifold adiabatically
/// eliminated. Each σ channel pumps at Ω_i²γ/(4Δ_i² + γ²) with Δ_i the
/// IR detuning from that Zeeman component; P decays to S (lost) or back to
/// D with the textbook branching. The detected rate is the P(−½) → S(+½)
/// share, 2/3 of the S branch. Perpendicular IR, so each σ carries half the
/// intensity. Returns (τ, n(τ)) on a grid of `dt` over `len` ns.
pub fn adiabatic_wavepacket(atom: &AtomModel, rabi: f64, detuning: f64, d0: [f64; 4], len: f64, dt: f64) -> Vec<(f64, f64)> {
    let d_index = |i: usize| i - D_M3;
    let gamma = atom.gamma_p;
    let mut pump = Matrix4::<f64>::zeros();
    // rates into P(−½), P(+½) as linear maps of the D populations
    let mut into_p = [Vector4::<f64>::zeros(), Vector4::<f64>::zeros()];
    for &(p, d, w) in &IR_SIGMA {
        let omega = rabi * std::f64::consts::FRAC_1_SQRT_2 * (w / 0.5).sqrt();
        let delta = detuning - (atom.zeeman_shift(p) - atom.zeeman_shift(d));
        let r = omega * omega * gamma / (4.0 * delta * delta + gamma * gamma);
        pump[(d_index(d), d_index(d))] -= r;
        into_p[usize::from(p == P_PLUS)][d_index(d)] += r;
    }
    let back = 1.0 - atom.branching_s;
    let mut gen = pump;
    for (k, p) in [P_MINUS, P_PLUS].into_iter().enumerate() {
        let to = p_to_d(p);
        for m in 0..4 {
            for c in 0..4 {
                gen[(m, c)] += back * to[m] * into_p[k][c];
            }
        }
    }
    let step = (gen * dt).exp();
    let mut d = Vector4::from(d0);
    let n_steps = (len / dt).round() as usize;
    let detected = |d: &Vector4<f64>| atom.branching_s * (2.0 / 3.0) * into_p[0].dot(d);
    let mut out = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        out.push((k as f64 * dt, detected(&d)));
        d = step * d;
    }
    out
}

/// Oracle decay rate for one scan point, fitted over the same window as
/// the simulated wavepacket and started from the simulated D populations.
pub fn adiabatic_gamma(sc: &Scenario, p: &ScanPoint) -> f64 {
    let ir = sc
        .lasers
        .iter()
        .find(|l| l.transition == rps_core::atom::Transition::Ir866)
        .expect("IR laser");
    let pops = p.prepared.populations();
    let d0 = [pops[D_M3], pops[D_M1], pops[D_P1], pops[D_P3]];
    let (a, b) = sc.sequence.emission_window();
    let wp = adiabatic_wavepacket(&sc.atom, ir.rabi_peak * p.ir_scale, ir.detuning, d0, b - a, 1.0);
    let (tau, rate): (Vec<f64>, Vec<f64>) = wp.into_iter().unzip();
    let (lo, hi) = p.fit.window;
    fit_exponential_tail(&tau, &rate, None, Weighting::Uniform, FitWindow::Absolute(lo, hi))
        .expect("oracle fit")
        .gamma
}

/// Upper-tail p-value of a chi-squared statistic.
pub fn chi2_p_value(chi2: f64, dof: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2)
}
