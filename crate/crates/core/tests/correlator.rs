mod common;

use common::{absolute_ticks, brute_force_pairs, chi2_p_value, scenario};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rps_core::atom::{AtomModel, LaserField, Transition, D_M3, D_P1};
use rps_core::correlator::{
    arrival_histogram, cross_correlate, g1_summary, hom_coincidence_model, CoincidenceModel, DarkModel, HistogramSpec,
    Normalization,
};
use rps_core::dynamics::{CorrelationGrid, DensityMatrix, Model, PopulationTrace, SequenceRun, Stats, TwoTimeCorrelation};
use rps_core::photostream::{detect, DetectorModel, StreamMetadata, TimeTag, TimeTagStream};
use rps_core::sequence::{Leakage, Phase, PulseSequence};
use rps_core::units::mhz_to_rad_per_ns;
use rps_core::C64;

fn meta(n: u64, period: f64) -> StreamMetadata {
    StreamMetadata {
        detector_id: 0,
        sequences: n,
        repetition_period: period,
        resolution: 1.0,
        digest: String::new(),
    }
}

fn stream_strategy() -> impl Strategy<Value = TimeTagStream> {
    prop::collection::vec((0u64..40, 0u64..500), 0..500).prop_map(|mut v| {
        v.sort_unstable();
        TimeTagStream {
            meta: meta(40, 500.0),
            records: v.into_iter().map(|(s, t)| TimeTag { sequence_index: s, ticks: t }).collect(),
        }
    })
}

fn fig4_correlation() -> TwoTimeCorrelation {
    let sc = scenario("fig4.json").without_leakage();
    let model = sc.model().unwrap();
    let run = model.simulate_sequence(sc.simulation.dt).unwrap();
    model
        .two_time_correlation(&run, rps_core::pipeline::correlation_grid(&sc), false)
        .unwrap()
}

/// Emission from a given D population with only the IR laser on for the
/// whole period.
fn ir_only(polarization: [C64; 3], start: DensityMatrix) -> TwoTimeCorrelation {
    let ir = LaserField::new(Transition::Ir866, mhz_to_rad_per_ns(20.0), mhz_to_rad_per_ns(-55.0)).with_polarization(polarization);
    let off = Phase { duration: 0.0, blue_scale: 0.0, ir_scale: 0.0 };
    let seq = PulseSequence {
        phases: [off, off, Phase { duration: 2000.0, blue_scale: 0.0, ir_scale: 1.0 }],
        repetition_period: 2000.0,
        leakage: Leakage::default(),
        switching_edge: 10.0,
    };
    let model = Model::new(AtomModel::default(), vec![ir], seq).unwrap();
    let run = SequenceRun {
        trace: PopulationTrace::default(),
        start_state: start,
        iterations: 0,
        last_change: 0.0,
        stats: Stats::default(),
    };
    model
        .two_time_correlation(&run, CorrelationGrid::over(0.0, 2000.0, 2.0, 600.0), false)
        .unwrap()
}

#[test]
fn single_channel_source_has_no_beat() {
    // σ+ only: P(−½) is fed from D(−3/2) alone, a single photon frequency
    let zero = C64::new(0.0, 0.0);
    let sigma_plus = [zero, zero, C64::new(1.0, 0.0)];
    let g = ir_only(sigma_plus, DensityMatrix::pure(D_M3));
    let s = g1_summary(&g, (0.0, 500.0)).unwrap();
    let mag: Vec<f64> = s.g1.iter().map(|z| z.norm()).collect();
    assert!((mag[0] - 1.0).abs() < 1e-12);
    // the off-resonant drive rings for a few P lifetimes; past that the
    // envelope of a single frequency only decays
    let late = (50.0 / g.grid.step) as usize;
    assert!(mag[late..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "|g1| not monotone");

    // both σ components from two D sublevels: the envelope rings
    let both = ir_only(LaserField::perpendicular(), DensityMatrix::mixture(&[D_M3, D_P1]));
    let s = g1_summary(&both, (0.0, 500.0)).unwrap();
    let mag: Vec<f64> = s.g1.iter().map(|z| z.norm()).collect();
    assert!(mag[late..].windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-6)));
}

#[test]
fn g1_is_normalized_at_zero_delay() {
    let g = fig4_correlation();
    let s = g1_summary(&g, (0.0, 500.0)).unwrap();
    assert!((s.g1[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
    assert!(s.t2 > 0.0);
}

#[test]
fn hom_model_limits() {
    let g = fig4_correlation();
    let ni = hom_coincidence_model(&g, &g, 0.0).unwrap();
    // overlap 0 is the bare sum of products, computed here directly
    let gr = g.grid;
    let c = ni.central();
    for k in [0usize, 10, 100] {
        let direct: f64 = (0..gr.n_t - k).map(|j| 0.5 * g.n(j) * g.n(j + k)).sum::<f64>() * gr.step;
        assert!((ni.ni[c + k] - direct).abs() <= 1e-12 * direct.max(1e-300));
        assert_eq!(ni.ni[c + k], ni.ni[c - k]);
    }
    assert_eq!(ni.ni, ni.int);

    let full = hom_coincidence_model(&g, &g, 1.0).unwrap();
    assert!(full.int[c].abs() <= 1e-12 * full.ni[c], "P(0) = {}", full.int[c]);
    let total = |v: &[f64]| v.iter().sum::<f64>();
    assert!(total(&full.int) <= total(&full.ni));
}

#[test]
fn budget_without_darks_or_leakage_is_clean() {
    let g = fig4_correlation();
    let zeros = vec![0.0; g.grid.n_tau];
    let m = CoincidenceModel::build(&g, &g, 1.0, (0.1, 0.1), (&zeros, &zeros), DarkModel { rates: [0.0, 0.0] }).unwrap();
    let b = m.budget(100.0);
    assert_eq!(b.signal_dark_fraction_ni, 0.0);
    assert_eq!(b.dark_dark_fraction_ni, 0.0);
    assert_eq!(b.doubles_fraction_ni, 0.0);
    assert_eq!(b.background_fraction_ni(), 0.0);
}

#[test]
fn budget_fractions_add_up() {
    let g = fig4_correlation();
    let d: Vec<f64> = (0..g.grid.n_tau).map(|k| 1e-6 * (-(k as f64) / 100.0).exp()).collect();
    let m = CoincidenceModel::build(&g, &g, 1.0, (0.1, 0.1), (&d, &d), DarkModel { rates: [1e-6, 1e-6] }).unwrap();
    let b = m.budget(100.0);
    let background = b.doubles + b.signal_dark + b.dark_dark;
    assert!((b.background_fraction_ni() - background / b.total_ni).abs() < 1e-6);
    assert!((b.total_ni - (b.cross + background)).abs() <= 1e-12 * b.total_ni);
    assert!(b.doubles_fraction_ni > 0.0 && b.signal_dark_fraction_ni > 0.0);
}

#[test]
fn independent_poisson_streams_are_flat() {
    let det = DetectorModel {
        efficiency: 0.0,
        dark_rate: 2e-3,
        gate_windows: vec![(0.0, 1000.0)],
        jitter_sigma: 0.0,
        resolution: 1.0,
    };
    let a = detect(&[], &det, meta(2000, 1000.0), 1).unwrap();
    let b = detect(&[], &det, meta(2000, 1000.0), 2).unwrap();
    let h = cross_correlate(&a, &b, HistogramSpec::centered(50.0, 2500.0), Normalization::PerPairRate).unwrap();
    let e = h.expected.as_ref().unwrap();
    let mut chi2 = 0.0;
    for (c, x) in h.counts.iter().zip(e) {
        chi2 += (*c as f64 - x).powi(2) / x;
    }
    let p = chi2_p_value(chi2, h.counts.len());
    assert!(p > 1e-3, "chi2 {chi2:.1} on {} bins", h.counts.len());
    let ratio = h.counts.iter().sum::<u64>() as f64 / e.iter().sum::<f64>();
    assert!((ratio - 1.0).abs() < 0.02, "normalized mean {ratio}");
}

#[test]
fn uniform_arrivals_give_a_flat_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 50_000u64;
    let mut records: Vec<TimeTag> = (0..n)
        .map(|i| TimeTag { sequence_index: i, ticks: 1000 + rng.random_range(0..800) })
        .collect();
    records.sort_unstable();
    let s = TimeTagStream { meta: meta(n, 2000.0), records };
    let h = arrival_histogram(&s, 1000.0, 800.0, 40.0).unwrap();
    let mean = n as f64 / h.counts.len() as f64;
    let chi2: f64 = h.counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    assert!(chi2_p_value(chi2, h.counts.len() - 1) > 1e-3, "chi2 {chi2}");
}

#[test]
fn auto_correlation_is_symmetric_without_self_pairs() {
    let sc = scenario("fig3a.json");
    let t = rps_core::pipeline::trajectories(&sc, 8).unwrap();
    let spec = HistogramSpec::centered(50.0, 25_000.0);
    let raw = cross_correlate(&t.stream, &t.stream, spec, Normalization::Raw).unwrap();
    let auto = rps_core::pipeline::correlate(std::slice::from_ref(&t.stream), spec).unwrap();
    let n = raw.counts.len();
    for i in 0..n {
        assert_eq!(raw.counts[i], raw.counts[n - 1 - i]);
    }
    let c = auto.central();
    assert_eq!(raw.counts[c] - auto.counts[c], t.stream.len() as u64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sweep_line_matches_brute_force(
        a in stream_strategy(),
        b in stream_strategy(),
        bin in prop::sample::select(vec![1.0, 5.0, 25.0, 50.0]),
        half in 0usize..40,
    ) {
        let spec = HistogramSpec::centered(bin, half as f64 * bin);
        let h = cross_correlate(&a, &b, spec, Normalization::Raw).unwrap();
        if a.is_empty() || b.is_empty() {
            prop_assert!(h.counts.is_empty());
        } else {
            let want = brute_force_pairs(&absolute_ticks(&a), &absolute_ticks(&b), bin as i64, half);
            prop_assert_eq!(h.counts, want);
        }
    }

    #[test]
    fn overlapping_photons_never_raise_the_central_bin(overlap in 0.0f64..=1.0) {
        let g = fig4_corr_cached();
        let m = hom_coincidence_model(g, g, overlap).unwrap();
        let c = m.central();
        prop_assert!(m.int[c] <= m.ni[c]);
    }
}

fn fig4_corr_cached() -> &'static TwoTimeCorrelation {
    static G: std::sync::OnceLock<TwoTimeCorrelation> = std::sync::OnceLock::new();
    G.get_or_init(fig4_correlation)
}
