mod common;

use proptest::prelude::*;
use rps_core::dynamics::EmissionEvent;
use rps_core::photostream::{detect, io, merge, split_hbt, DetectorModel, StreamMetadata, TimeTag, TimeTagStream};

const PERIOD: f64 = 2000.0;

fn meta(n: u64) -> StreamMetadata {
    StreamMetadata {
        detector_id: 0,
        sequences: n,
        repetition_period: PERIOD,
        resolution: 1.0,
        digest: "test".into(),
    }
}

fn detector(efficiency: f64, dark_rate: f64) -> DetectorModel {
    DetectorModel {
        efficiency,
        dark_rate,
        gate_windows: vec![(100.0, 600.0), (1100.0, 1900.0)],
        jitter_sigma: 0.0,
        resolution: 1.0,
    }
}

fn events_strategy() -> impl Strategy<Value = Vec<EmissionEvent>> {
    prop::collection::vec((0u64..50, 0.0f64..PERIOD, any::<bool>()), 0..200).prop_map(|mut v| {
        v.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        v.into_iter()
            .map(|(s, t, d)| EmissionEvent { sequence_index: s, time: t, channel: 0, detected: d })
            .collect()
    })
}

#[test]
fn dark_counts_are_poisson() {
    // N = rate · gated time · sequences; many seeds, mean and variance
    let n_seq = 200;
    let det = detector(0.0, 2e-5);
    let mean = det.dark_rate * det.gated_time() * n_seq as f64;
    let totals: Vec<f64> = (0..400)
        .map(|seed| detect(&[], &det, meta(n_seq), seed).unwrap().len() as f64)
        .collect();
    let k = totals.len() as f64;
    let m = totals.iter().sum::<f64>() / k;
    let var = totals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    // standard error of the mean √(N/k); of the variance ≈ N·√(2/(k−1))
    assert!((m - mean).abs() < 5.0 * (mean / k).sqrt(), "mean {m} vs {mean}");
    assert!((var - mean).abs() < 5.0 * mean * (2.0 / (k - 1.0)).sqrt(), "variance {var} vs {mean}");
}

#[test]
fn dark_counts_are_uniform_within_gates() {
    let det = detector(0.0, 1e-3);
    let s = detect(&[], &det, meta(2000), 5).unwrap();
    let mut per_gate = [0.0f64; 2];
    for r in &s.records {
        let t = s.timestamp_ns(r);
        per_gate[usize::from(t >= 1000.0)] += 1.0;
    }
    // counts split in proportion to gate lengths 500 : 800
    let n = per_gate[0] + per_gate[1];
    let p = 500.0 / 1300.0;
    let z = (per_gate[0] - n * p) / (n * p * (1.0 - p)).sqrt();
    assert!(z.abs() < 5.0, "z = {z}");
}

#[test]
fn split_of_single_photons_has_no_coincidences() {
    // one click per sequence at most: the two outputs never share a sequence
    let stream = TimeTagStream {
        meta: meta(1000),
        records: (0..1000).map(|i| TimeTag { sequence_index: i, ticks: 300 + i % 200 }).collect(),
    };
    let (a, b) = split_hbt(&stream, 3);
    let spec = rps_core::correlator::HistogramSpec::centered(50.0, 500.0);
    let h = rps_core::correlator::cross_correlate(&a, &b, spec, rps_core::correlator::Normalization::Raw).unwrap();
    assert_eq!(h.counts[h.central()], 0);
}

#[test]
fn split_sizes_are_binomial() {
    let n = 10_000u64;
    let stream = TimeTagStream {
        meta: meta(n),
        records: (0..n).map(|i| TimeTag { sequence_index: i, ticks: 500 }).collect(),
    };
    let (a, b) = split_hbt(&stream, 17);
    assert_eq!(a.len() + b.len(), n as usize);
    let z = (a.len() as f64 - n as f64 / 2.0) / (n as f64 / 4.0).sqrt();
    assert!(z.abs() < 5.0);
    assert_eq!(a.meta.detector_id, 0);
    assert_eq!(b.meta.detector_id, 1);
}

#[test]
fn streams_written_by_a_simulation_read_back() {
    let sc = common::scenario("fig4.json");
    let t = rps_core::pipeline::trajectories(&sc, 3).unwrap();
    let mut buf = Vec::new();
    io::write_csv(&[&t.stream], &mut buf).unwrap();
    let back = io::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, vec![t.stream.clone()]);
    let mut bin = Vec::new();
    io::write_binary(&t.stream, &mut bin).unwrap();
    assert_eq!(io::read_binary(bin.as_slice()).unwrap(), t.stream);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detection_is_monotone_in_efficiency(
        events in events_strategy(),
        lo in 0.0f64..1.0,
        extra in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let hi = lo + (1.0 - lo) * extra;
        let a = detect(&events, &detector(lo, 0.0), meta(50), seed).unwrap();
        let b = detect(&events, &detector(hi, 0.0), meta(50), seed).unwrap();
        for r in &a.records {
            prop_assert!(b.records.contains(r));
        }
    }

    #[test]
    fn detection_is_deterministic_and_gated(
        events in events_strategy(),
        eff in 0.0f64..=1.0,
        dark in 0.0f64..1e-3,
        jitter in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut det = detector(eff, dark);
        det.jitter_sigma = jitter;
        let a = detect(&events, &det, meta(50), seed).unwrap();
        let b = detect(&events, &det, meta(50), seed).unwrap();
        prop_assert_eq!(&a, &b);
        a.validate().unwrap();
        for r in &a.records {
            prop_assert!(det.in_gate(a.timestamp_ns(r)));
        }
    }

    #[test]
    fn ideal_detection_is_the_identity(events in events_strategy()) {
        let det = DetectorModel { gate_windows: vec![(0.0, PERIOD)], ..detector(1.0, 0.0) };
        let s = detect(&events, &det, meta(50), 0).unwrap();
        let want: Vec<TimeTag> = events
            .iter()
            .filter(|e| e.detected)
            .map(|e| TimeTag { sequence_index: e.sequence_index, ticks: e.time.floor() as u64 })
            .collect();
        let mut want = want;
        want.sort_unstable();
        prop_assert_eq!(s.records, want);
    }

    #[test]
    fn split_then_merge_restores_the_stream(events in events_strategy(), seed in any::<u64>()) {
        let det = DetectorModel { gate_windows: vec![(0.0, PERIOD)], ..detector(1.0, 0.0) };
        let s = detect(&events, &det, meta(50), 0).unwrap();
        let (a, b) = split_hbt(&s, seed);
        let m = merge(&a, &b, 0).unwrap();
        prop_assert_eq!(m.records, s.records);
    }

    #[test]
    fn csv_and_binary_round_trip(events in events_strategy(), res in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        let det = DetectorModel { gate_windows: vec![(0.0, PERIOD)], resolution: res, ..detector(1.0, 0.0) };
        let s = detect(&events, &det, StreamMetadata { resolution: res, ..meta(50) }, 1).unwrap();
        let mut csv = Vec::new();
        io::write_csv(&[&s], &mut csv).unwrap();
        let back = io::read_csv(csv.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &s);
        let mut bin = Vec::new();
        io::write_binary(&s, &mut bin).unwrap();
        prop_assert_eq!(io::read_binary(bin.as_slice()).unwrap(), s);
    }
}
