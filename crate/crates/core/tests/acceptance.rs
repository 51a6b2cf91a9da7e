//! End-to-end acceptance run over the shipped scenarios. Every criterion is
//! checked at its full tolerance; one line per criterion is printed and the
//! test fails at the end if any of them did.

mod common;

use common::{absolute_ticks, adiabatic_gamma, brute_force_pairs, chi2_p_value, scenario};
use nalgebra::DMatrix;
use rps_core::atom::{build_jump_operators, cg_table, AtomModel, Manifold, D_M3, P_MINUS, P_PLUS, S_MINUS};
use rps_core::correlator::{cross_correlate, HistogramSpec, Normalization};
use rps_core::dynamics::liouvillian::{unvectorize, vectorize};
use rps_core::dynamics::{DensityMatrix, JumpSimulator};
use rps_core::linalg::{hermitian_eigenvalues, hermiticity_error, trace};
use rps_core::photostream::io;
use rps_core::pipeline;
use rps_core::{Mat8, C64};
use std::io::Write;
use std::time::Instant;

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        // straight to stdout so the lines survive libtest's output capture
        let mut out = std::io::stdout().lock();
        writeln!(out, "{} [{id}] {detail}", if ok { "PASS" } else { "FAIL" }).unwrap();
        if !ok {
            self.failures.push(format!("[{id}] {detail}"));
        }
    }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

fn state_preparation(r: &mut Report) {
    let sc = scenario("fig2c.json");
    let start = Instant::now();
    let p = pipeline::populations(&sc).unwrap();
    let secs = start.elapsed().as_secs_f64();
    r.check("1", p.prepared >= 0.95, format!("fig2c prepared D population {:.4} (>= 0.95)", p.prepared));
    r.check("1", secs < 1.0, format!("fig2c runtime {secs:.2} s (< 1 s)"));
}

fn antibunching(r: &mut Report) {
    let sc = scenario("fig3a.json");
    let start = Instant::now();
    let h = pipeline::hbt(&sc, sc.simulation.seed).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let central = h.central.counts as f64;
    let sigma = h.central_expected.max(1.0).sqrt();
    r.check(
        "2",
        (central - h.central_expected).abs() <= 3.0 * sigma,
        format!("central peak {central} vs predicted {:.1} (3 sigma = {:.1})", h.central_expected, 3.0 * sigma),
    );
    let period = sc.sequence.repetition_period;
    let first = h.side_peaks.iter().filter(|p| (p.tau.abs() - period).abs() < 1e-9).map(|p| p.counts).max().unwrap_or(0);
    r.check(
        "2",
        central < 0.05 * first as f64,
        format!("central {central} < 5% of first side peak {first}"),
    );
    let side_total: u64 = h.side_peaks.iter().map(|p| p.counts).sum();
    let mean_side = side_total as f64 / h.side_peaks.len().max(1) as f64;
    let at_multiples = !h.side_peaks.is_empty()
        && h.side_peaks.iter().all(|p| (p.tau / period - (p.tau / period).round()).abs() < 1e-9)
        && h.side_peaks.iter().all(|p| p.counts as f64 > 0.5 * mean_side)
        && (h.off_peak as f64) < 0.01 * side_total as f64;
    r.check(
        "2",
        at_multiples,
        format!(
            "{} side peaks at multiples of {period} ns, mean {mean_side:.0}, off-peak {}",
            h.side_peaks.len(),
            h.off_peak
        ),
    );
    r.check("2", secs < 60.0, format!("fig3a runtime {secs:.1} s (< 60 s)"));
}

fn tunable_t1(r: &mut Report) {
    let sc = scenario("fig3b-scan.json");
    let start = Instant::now();
    let scan = pipeline::scan_rate(&sc).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let t1: Vec<f64> = scan.points.iter().map(|p| p.fit.t1).collect();
    let lo = t1.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t1.iter().copied().fold(0.0, f64::max);
    r.check("3", within(lo, 70.0, 0.15), format!("shortest T1 {lo:.1} ns (70 ns +- 15%)"));
    r.check("3", within(hi, 1600.0, 0.15), format!("longest T1 {hi:.0} ns (1600 ns +- 15%)"));
    r.check(
        "3",
        scan.linearity.r_squared >= 0.99,
        format!(
            "Gamma vs intensity R^2 {:.5} (>= 0.99), {} points in {secs:.1} s",
            scan.linearity.r_squared,
            scan.points.len()
        ),
    );
    let mut worst = 0.0f64;
    for p in &scan.points[..scan.weak_points] {
        let oracle = adiabatic_gamma(&sc, p);
        worst = worst.max((p.fit.gamma / oracle - 1.0).abs());
    }
    r.check(
        "3",
        worst <= 0.10,
        format!("weak-regime Gamma vs adiabatic oracle, worst deviation {:.1}% (<= 10%)", 100.0 * worst),
    );
    let gamma_at = |intensity: f64| {
        scan.points
            .iter()
            .find(|p| (p.ir_scale * p.ir_scale - intensity).abs() < 1e-9)
            .map(|p| p.fit.gamma)
    };
    match (gamma_at(0.04), gamma_at(0.08)) {
        (Some(a), Some(b)) => {
            r.check("3", within(b / a, 2.0, 0.05), format!("doubling the intensity scales Gamma by {:.3}", b / a))
        }
        _ => r.check("3", false, "scan lacks the 0.04 / 0.08 intensity pair".into()),
    }
}

fn hom_and_coherence(r: &mut Report) {
    let sc = scenario("fig4.json");
    let start = Instant::now();
    let h = pipeline::hom(&sc, sc.simulation.seed).unwrap();
    let secs = start.elapsed().as_secs_f64();

    r.check(
        "4",
        (200.0..=260.0).contains(&h.t1.t1),
        format!("T1 from the distinguishable central peak {:.1} ns ([200, 260])", h.t1.t1),
    );

    r.check(
        "5",
        (0.3..=0.7).contains(&h.contrast),
        format!("HOM suppression {:.1}% ([30, 70]%)", 100.0 * h.contrast),
    );
    r.check(
        "5",
        (h.budget_ni.dark_fraction_ni() - 0.05).abs() < 1e-3 && (h.budget_int.dark_fraction_int() - 0.08).abs() < 1e-3,
        format!(
            "calibrated dark fractions {:.4} / {:.4} (0.05 / 0.08)",
            h.budget_ni.dark_fraction_ni(),
            h.budget_int.dark_fraction_int()
        ),
    );
    r.check(
        "5",
        h.pure_contrast >= 0.99,
        format!("pure sources, no darks or leakage: suppression at zero delay {:.4} (>= 0.99)", h.pure_contrast),
    );
    r.check("5", secs < 300.0, format!("fig4 runtime {secs:.1} s (< 300 s)"));

    let g = &h.g1;
    r.check(
        "6",
        (200.0..=300.0).contains(&g.t2),
        format!("g1 envelope decay {:.1} ns ([200, 300])", g.t2),
    );
    let err = (g.t2_stderr.powi(2) + h.t1.t1_stderr.powi(2)).sqrt();
    r.check(
        "6",
        h.t1.t1 <= g.t2 && g.t2 <= 2.0 * h.t1.t1 + err,
        format!("T1 {:.1} <= T2 {:.1} <= 2 T1 + {err:.1}", h.t1.t1, g.t2),
    );

    let want = sc.atom.expected_beat_mhz();
    r.check(
        "7",
        (g.beat_mhz - want).abs() <= g.fft_bin_mhz,
        format!("beat {:.2} MHz vs {want:.2} MHz (one bin = {:.2} MHz)", g.beat_mhz, g.fft_bin_mhz),
    );
}

fn physical(rho: &Mat8) -> f64 {
    let t = (trace(rho).re - 1.0).abs();
    let min = hermitian_eigenvalues(rho).iter().copied().fold(f64::INFINITY, f64::min);
    t.max(hermiticity_error(rho)).max((-min).max(0.0))
}

fn property_suites(r: &mut Report) {
    let sc = scenario("fig4.json");
    let model = sc.model().unwrap();
    let run = model.simulate_sequence(sc.simulation.dt).unwrap();

    let times: Vec<f64> = (0..200).map(|k| k as f64 * 10.0).collect();
    let states = model.states_at(&run.start_state, 0.0, &times).unwrap();
    let worst = states.iter().map(physical).fold(0.0, f64::max);
    r.check("8", worst < 1e-8, format!("density matrices over one period: worst violation {worst:.1e}"));

    let cg = cg_table();
    let mut cg_err = 0.0f64;
    for upper in [P_MINUS, P_PLUS] {
        for m in [Manifold::S12, Manifold::D32] {
            let s: f64 = cg.channels_to(m).filter(|e| e.upper == upper).map(|e| e.amplitude.powi(2)).sum();
            cg_err = cg_err.max((s - 1.0).abs());
        }
    }
    r.check("8", cg_err < 1e-12, format!("CG sum rules, worst {cg_err:.1e}"));

    let atom = AtomModel::default();
    let mut sum = Mat8::zeros();
    for op in build_jump_operators(&atom) {
        let l = op.matrix();
        sum += l.adjoint() * l;
    }
    let mut want = Mat8::zeros();
    for p in [P_MINUS, P_PLUS] {
        want[(p, p)] = C64::new(atom.gamma_p, 0.0);
    }
    let comp = (sum - want).iter().map(|c| c.norm()).fold(0.0, f64::max);
    r.check("8", comp < 1e-12, format!("sum of L^dag L is gamma_P on P, worst {comp:.1e}"));

    let rho0 = DensityMatrix::mixture(&[S_MINUS, D_M3]);
    let t = 137.0;
    let (blue, ir) = (1.0, 1.0);
    let constant = rps_core::dynamics::Model::constant(sc.atom.clone(), sc.lasers.clone(), blue, ir).unwrap();
    let mut x = rho0.0;
    constant.integrator().propagate(&mut x, 0.0, t).unwrap();
    let l: DMatrix<C64> = constant.generator.superoperator(blue, ir) * C64::new(t, 0.0);
    let y = unvectorize(&(l.exp() * vectorize(&rho0.0)));
    let dev = (x - y).iter().map(|c| c.norm()).fold(0.0, f64::max);
    r.check("8", dev <= 1e-8, format!("integrator vs matrix exponential {dev:.1e} (<= 1e-8)"));

    let (a, b) = sc.sequence.emission_window();
    let sim = JumpSimulator::new(&model, &run, a, &[]).unwrap();
    let n = 100_000u64;
    let events = sim.run(n, 99, true);
    let bins = 18;
    let w = (b - a) / bins as f64;
    let mut counts = vec![0.0; bins];
    for e in &events {
        counts[(((e.time - a) / w).floor() as usize).min(bins - 1)] += 1.0;
    }
    let (mut chi2, mut dof) = (0.0, 0);
    for (k, c) in counts.iter().enumerate() {
        let e = n as f64 * run.trace.emitted_between(a + k as f64 * w, a + (k + 1) as f64 * w);
        if e >= 5.0 {
            chi2 += (c - e) * (c - e) / e;
            dof += 1;
        }
    }
    let p = chi2_p_value(chi2, dof);
    r.check("8", p > 0.01, format!("trajectories vs master equation chi2 {chi2:.1} / {dof}, p = {p:.3} (> 0.01)"));

    let fig3a = scenario("fig3a.json");
    let one = pipeline::hbt(&fig3a, 5).unwrap();
    let two = pipeline::hbt(&fig3a, 5).unwrap();
    let (sa, sb) = (&one.streams[0], &one.streams[1]);
    let small = |s: &rps_core::photostream::TimeTagStream| rps_core::photostream::TimeTagStream {
        meta: s.meta.clone(),
        records: s.records.iter().take(1000).cloned().collect(),
    };
    let (ta, tb) = (small(sa), small(sb));
    let bin = 50.0;
    let half = 500usize;
    let h = cross_correlate(&ta, &tb, HistogramSpec::centered(bin, half as f64 * bin), Normalization::Raw).unwrap();
    let brute = brute_force_pairs(&absolute_ticks(&ta), &absolute_ticks(&tb), bin as i64, half);
    r.check(
        "8",
        h.counts == brute,
        format!("sweep-line correlator equals brute force on {} x {} records", ta.len(), tb.len()),
    );

    let bytes = |s: &rps_core::photostream::TimeTagStream| {
        let mut v = Vec::new();
        io::write_binary(s, &mut v).unwrap();
        v
    };
    let same = bytes(sa) == bytes(&two.streams[0]) && bytes(sb) == bytes(&two.streams[1]);
    let other = pipeline::hbt(&fig3a, 6).unwrap();
    r.check(
        "8",
        same && bytes(sa) != bytes(&other.streams[0]),
        "seeded reruns byte-identical, a new seed differs".into(),
    );
}

#[test]
fn acceptance() {
    let mut r = Report { failures: Vec::new() };
    state_preparation(&mut r);
    antibunching(&mut r);
    tunable_t1(&mut r);
    hom_and_coherence(&mut r);
    property_suites(&mut r);
    assert!(r.failures.is_empty(), "failed criteria:\n{}", r.failures.join("\n"));
}

