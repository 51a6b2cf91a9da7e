//! Scenario-level computations behind each CLI subcommand.
//!
//! Every function is a pure function of the scenario and a seed; file
//! writing is left to the caller.

use crate::correlator::{
    arrival_histogram, cross_correlate, fit_exponential_tail, g1_summary, hom_coincidence_model, linearity_scan,
    two_run_contrast, Arm, Budget, CoincidenceModel, CorrelationHistogram, DarkModel, ExpFit, G1Summary,
    HistogramSpec, HomModel, LinearityFit, Normalization, WavepacketEstimate, Weighting,
};
use crate::dynamics::{CorrelationGrid, EmissionEvent, JumpSimulator, Model, SequenceRun, TwoTimeCorrelation};
use crate::error::{Error, Result};
use crate::photostream::{add_dark_counts, detect, split_hbt, DetectorModel, StreamMetadata, TimeTagStream};
use crate::scenario::{Mode, Scenario};
use crate::sequence::{EMIT, PREPARE};

/// Independent seeds for the stages of one run.
fn derive(seed: u64, stage: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub struct Populations {
    pub run: SequenceRun,
    /// D₃/₂ population at the end of the preparation phase.
    pub prepared: f64,
    /// Detected-channel photons emitted per sequence in the emission phase.
    pub emission_probability: f64,
}

pub fn populations(sc: &Scenario) -> Result<Populations> {
    let model = sc.model()?;
    let run = model.simulate_sequence(sc.simulation.dt)?;
    let seq = &sc.sequence;
    let prepared = run
        .trace
        .at(seq.phase_end(PREPARE))
        .map(|s| s.d)
        .ok_or_else(|| Error::Invalid("empty population trace".into()))?;
    let (a, b) = seq.emission_window();
    Ok(Populations {
        emission_probability: run.trace.emitted_between(a, b),
        prepared,
        run,
    })
}

fn meta(sc: &Scenario, detector_id: u8, sequences: u64) -> StreamMetadata {
    StreamMetadata {
        detector_id,
        sequences,
        repetition_period: sc.sequence.repetition_period,
        resolution: sc.detectors[0].resolution,
        digest: sc.digest.clone(),
    }
}

/// Earliest time any detector looks, where trajectories start.
fn trajectory_start(sc: &Scenario) -> f64 {
    let gates = sc.detectors.iter().flat_map(|d| d.gate_windows.iter().map(|g| g.0));
    gates.fold(sc.sequence.emission_window().0, f64::min)
}

/// Quantum-jump emission events of one source, `n` sequences.
pub fn source_events(sc: &Scenario, model: &Model, run: &SequenceRun, n: u64, seed: u64) -> Result<Vec<EmissionEvent>> {
    let sim = JumpSimulator::new(model, run, trajectory_start(sc), &[])?;
    Ok(sim.run(n, seed, true))
}

pub struct Trajectories {
    pub events: Vec<EmissionEvent>,
    pub stream: TimeTagStream,
}

/// One source seen by detector 0.
pub fn trajectories(sc: &Scenario, seed: u64) -> Result<Trajectories> {
    let model = sc.model()?;
    let run = model.simulate_sequence(sc.simulation.dt)?;
    let n = sc.simulation.n_sequences;
    let events = source_events(sc, &model, &run, n, derive(seed, 1))?;
    let stream = detect(&events, &sc.detectors[0], meta(sc, 0, n), derive(seed, 2))?;
    Ok(Trajectories { events, stream })
}

pub struct Wavepacket {
    pub estimate: WavepacketEstimate,
    pub fit: ExpFit,
    pub clicks: usize,
}

/// Arrival-time histogram relative to the start of the emission phase.
pub fn wavepacket(sc: &Scenario, seed: u64) -> Result<Wavepacket> {
    let t = trajectories(sc, seed)?;
    let (a, b) = sc.sequence.emission_window();
    let mut estimate = arrival_histogram(&t.stream, a, b - a, sc.analysis.bin)?;
    let fit = estimate.fit_tail(sc.analysis.wavepacket_window.fit_window())?.clone();
    Ok(Wavepacket {
        estimate,
        fit,
        clicks: t.stream.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub ir_scale: f64,
    /// Intensity relative to the peak IR intensity, scale².
    pub intensity_rel: f64,
    pub fit: ExpFit,
    /// Cyclic state at the start of the emission phase.
    pub prepared: crate::dynamics::DensityMatrix,
    /// (τ from the emission start, detected emission rate) on the dt grid.
    pub wavepacket: Vec<(f64, f64)>,
}

pub struct RateScan {
    pub points: Vec<ScanPoint>,
    /// Γ ∝ intensity over all points.
    pub linearity: LinearityFit,
    /// Γ ∝ intensity over the weak-regime points.
    pub weak_linearity: LinearityFit,
    pub weak_points: usize,
}

/// Master-equation wavepacket of one emission-phase IR scale, fitted with
/// the scenario's wavepacket window.
pub fn scan_point(sc: &Scenario, ir_scale: f64) -> Result<ScanPoint> {
    let s = sc.with_emission_ir_scale(ir_scale);
    let model = s.model()?;
    let run = model.simulate_sequence(s.simulation.dt)?;
    let (a, b) = s.sequence.emission_window();
    let wavepacket: Vec<(f64, f64)> = run
        .trace
        .samples
        .iter()
        .filter(|p| p.t >= a && p.t <= b)
        .map(|p| (p.t - a, p.emission_rate))
        .collect();
    let (tau, rate): (Vec<f64>, Vec<f64>) = wavepacket.iter().copied().unzip();
    let fit = fit_exponential_tail(&tau, &rate, None, Weighting::Uniform, s.analysis.wavepacket_window.fit_window())?;
    let prepared = crate::dynamics::DensityMatrix(model.states_at(&run.start_state, 0.0, &[a])?[0]);
    Ok(ScanPoint {
        ir_scale,
        intensity_rel: ir_scale * ir_scale,
        fit,
        prepared,
        wavepacket,
    })
}

pub fn scan_rate(sc: &Scenario) -> Result<RateScan> {
    let scan = sc
        .analysis
        .scan
        .as_ref()
        .ok_or_else(|| Error::Invalid("analysis.scan is required for scan-rate".into()))?;
    let mut points = Vec::new();
    for &s in &scan.ir_scales {
        points.push(scan_point(sc, s)?);
    }
    let x: Vec<f64> = points.iter().map(|p| p.intensity_rel).collect();
    let y: Vec<f64> = points.iter().map(|p| p.fit.gamma).collect();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let weak: Vec<usize> = order[..scan.weak_points].to_vec();
    let wx: Vec<f64> = weak.iter().map(|&i| x[i]).collect();
    let wy: Vec<f64> = weak.iter().map(|&i| y[i]).collect();
    Ok(RateScan {
        linearity: linearity_scan(&x, &y)?,
        weak_linearity: linearity_scan(&wx, &wy)?,
        weak_points: scan.weak_points,
        points,
    })
}

/// Central (same-sequence) and side-peak statistics of an HBT histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakCounts {
    /// Delay of the peak centre, ns.
    pub tau: f64,
    pub counts: u64,
}

/// Predicted same-sequence coincidences of an HBT measurement per
/// sequence, split by origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HbtAccidentals {
    pub signal_dark: f64,
    pub dark_dark: f64,
    pub doubles: f64,
}

impl HbtAccidentals {
    pub fn total(&self) -> f64 {
        self.signal_dark + self.dark_dark + self.doubles
    }
}

pub struct Hbt {
    pub histogram: CorrelationHistogram,
    pub streams: [TimeTagStream; 2],
    pub dark_rates: [f64; 2],
    pub central: PeakCounts,
    /// Predicted central-peak counts.
    pub central_expected: f64,
    pub accidentals: HbtAccidentals,
    /// Peaks at ±1, ±2, ... repetition periods inside the range.
    pub side_peaks: Vec<PeakCounts>,
    /// Counts outside all peak windows.
    pub off_peak: u64,
    /// Half width of the peak windows (the gate length), ns.
    pub peak_half_width: f64,
    pub mode: Mode,
}

fn gate_length(d: &DetectorModel) -> f64 {
    d.gated_time()
}

/// Two detectors behind a 50/50 beam splitter on one source.
///
/// The predicted central peak is signal×dark + dark×dark plus
/// same-sequence photon pairs counted in the trajectories.
pub fn hbt(sc: &Scenario, seed: u64) -> Result<Hbt> {
    let model = sc.model()?;
    let run = model.simulate_sequence(sc.simulation.dt)?;
    let n = sc.simulation.n_sequences;
    let events = source_events(sc, &model, &run, n, derive(seed, 1))?;
    let det = [sc.detector(0).clone(), sc.detector(1).clone()];
    let eta = det[0].efficiency;
    if det[1].efficiency != eta {
        return Err(Error::Invalid("detectors: HBT needs equal efficiencies on both detectors".into()));
    }
    // photon clicks before the beam splitter, darks added per detector
    let photons = DetectorModel { dark_rate: 0.0, ..det[0].clone() };
    let clicks = detect(&events, &photons, meta(sc, 0, n), derive(seed, 2))?;
    let (a, b) = split_hbt(&clicks, derive(seed, 3));

    // signal clicks per sequence in each detector, from the master equation
    let signal: Vec<f64> = det
        .iter()
        .map(|d| {
            let em: f64 = d.gate_windows.iter().map(|&(x, y)| run.trace.emitted_between(x, y)).sum();
            0.5 * eta * em
        })
        .collect();
    let dark_rates = match sc.analysis.signal_to_background {
        Some(sbr) => {
            let r0 = signal[0] / (sbr * gate_length(&det[0]));
            let r1 = signal[1] / (sbr * gate_length(&det[1]));
            [r0, r1]
        }
        None => [det[0].dark_rate, det[1].dark_rate],
    };
    let mut streams = Vec::new();
    for (i, s) in [a, b].into_iter().enumerate() {
        let d = DetectorModel { dark_rate: dark_rates[i], ..det[i].clone() };
        let mut s = add_dark_counts(&s, &d, derive(seed, 4 + i as u64))?;
        s.meta.detector_id = i as u8;
        streams.push(s);
    }
    let streams: [TimeTagStream; 2] = streams.try_into().expect("two streams");
    let spec = HistogramSpec::centered(sc.analysis.bin, sc.analysis.histogram_range);
    let histogram = cross_correlate(&streams[0], &streams[1], spec, Normalization::PerPairRate)?;

    let dark: Vec<f64> = (0..2).map(|i| dark_rates[i] * gate_length(&det[i])).collect();
    // unordered same-sequence pairs of detected-channel photons
    let mut pairs = 0u64;
    let mut i = 0;
    while i < events.len() {
        let mut j = i;
        while j < events.len() && events[j].sequence_index == events[i].sequence_index {
            j += 1;
        }
        let k = (j - i) as u64;
        pairs += k * (k - 1) / 2;
        i = j;
    }
    let accidentals = HbtAccidentals {
        signal_dark: signal[0] * dark[1] + dark[0] * signal[1],
        dark_dark: dark[0] * dark[1],
        doubles: pairs as f64 / n as f64 * eta * eta / 2.0,
    };

    let half = det.iter().map(gate_length).fold(0.0, f64::max);
    let period = sc.sequence.repetition_period;
    let peak = |centre: f64| -> u64 {
        histogram
            .tau
            .iter()
            .zip(&histogram.counts)
            .filter(|(t, _)| (*t - centre).abs() <= half)
            .map(|(_, c)| *c)
            .sum()
    };
    let mut side_peaks = Vec::new();
    let m_max = (sc.analysis.histogram_range / period).floor() as i64;
    for m in (-m_max..=m_max).filter(|&m| m != 0) {
        side_peaks.push(PeakCounts {
            tau: m as f64 * period,
            counts: peak(m as f64 * period),
        });
    }
    let in_peak = |t: f64| (-m_max..=m_max).any(|m| (t - m as f64 * period).abs() <= half);
    let off_peak = histogram
        .tau
        .iter()
        .zip(&histogram.counts)
        .filter(|(t, _)| !in_peak(**t))
        .map(|(_, c)| *c)
        .sum();
    Ok(Hbt {
        central: PeakCounts { tau: 0.0, counts: peak(0.0) },
        central_expected: accidentals.total() * n as f64,
        accidentals,
        side_peaks,
        off_peak,
        peak_half_width: half,
        dark_rates,
        streams,
        histogram,
        mode: Mode::MonteCarlo,
    })
}

/// Regression grid over the emission window.
pub fn correlation_grid(sc: &Scenario) -> CorrelationGrid {
    let (a, b) = sc.sequence.emission_window();
    CorrelationGrid::over(a, b, sc.simulation.correlation_step, sc.simulation.max_tau)
}

/// Field correlation of the leakage-free source.
pub fn clean_correlation(sc: &Scenario, with_intensity: bool) -> Result<(Model, SequenceRun, TwoTimeCorrelation)> {
    let clean = sc.without_leakage();
    let model = clean.model()?;
    let run = model.simulate_sequence(sc.simulation.dt)?;
    let g = model.two_time_correlation(&run, correlation_grid(sc), with_intensity)?;
    Ok((model, run, g))
}

/// T1 from the central peak of the distinguishable coincidence density.
pub fn t1_from_central_peak(hom: &HomModel, sc: &Scenario) -> Result<ExpFit> {
    let c = hom.central();
    fit_exponential_tail(
        &hom.tau[c..],
        &hom.ni[c..],
        None,
        Weighting::Uniform,
        sc.analysis.t1_window.fit_window(),
    )
}

/// One-sided density of ordered same-source photon pairs per sequence on
/// the delay grid, both photons inside the emission window.
pub fn doubles_from_regression(g: &TwoTimeCorrelation) -> Result<Vec<f64>> {
    let step = g.grid.step;
    (0..g.grid.n_tau)
        .map(|k| {
            g.gated_rows(k)
                .map(|j| g.g2(j, k).ok_or_else(|| Error::Invalid("intensity correlation missing".into())))
                .sum::<Result<f64>>()
                .map(|s| s * step)
        })
        .collect()
}

/// The same density estimated from trajectories: pairs of detected-channel
/// photons of one sequence, binned on the delay grid.
pub fn doubles_from_events(events: &[EmissionEvent], grid: CorrelationGrid, n_sequences: u64) -> Vec<f64> {
    let (a, b) = (grid.start, grid.t(grid.n_t));
    let step = grid.step;
    let mut counts = vec![0.0; grid.n_tau];
    let mut i = 0;
    while i < events.len() {
        let mut j = i;
        while j < events.len() && events[j].sequence_index == events[i].sequence_index {
            j += 1;
        }
        let seq: Vec<f64> = events[i..j]
            .iter()
            .filter(|e| e.detected && e.time >= a && e.time < b)
            .map(|e| e.time)
            .collect();
        for (p, &t1) in seq.iter().enumerate() {
            for &t2 in &seq[p + 1..] {
                let d = (t2 - t1).abs();
                let k = (d / step + 0.5).floor() as usize;
                if k < grid.n_tau {
                    // the k = 0 bin is half width on the one-sided axis
                    counts[k] += if k == 0 { 2.0 } else { 1.0 };
                }
            }
        }
        i = j;
    }
    let norm = n_sequences as f64 * step;
    counts.iter().map(|c| c / norm).collect()
}

/// A binned coincidence histogram of expected counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHistogram {
    pub tau: Vec<f64>,
    /// Expected counts over all sequences.
    pub counts: Vec<f64>,
    /// counts / uncorrelated expectation.
    pub norm: Vec<f64>,
    /// √counts.
    pub err: Vec<f64>,
}

fn model_histogram(tau: Vec<f64>, per_seq: &[f64], expected: &[f64], n: f64) -> ModelHistogram {
    let counts: Vec<f64> = per_seq.iter().map(|v| v * n).collect();
    ModelHistogram {
        norm: per_seq
            .iter()
            .zip(expected)
            .map(|(v, e)| if *e > 0.0 { v / e } else { 0.0 })
            .collect(),
        err: counts.iter().map(|c| c.sqrt()).collect(),
        counts,
        tau,
    }
}

pub struct Hom {
    pub grid: CorrelationGrid,
    /// Leakage-free model with identical sources.
    pub pure: HomModel,
    pub t1: ExpFit,
    pub half_width: f64,
    /// Models of the distinguishable (b) and overlapping (c) experiments,
    /// each with its own dark rate.
    pub model_ni: CoincidenceModel,
    pub model_int: CoincidenceModel,
    pub budget_ni: Budget,
    pub budget_int: Budget,
    pub dark_rates: [f64; 2],
    pub contrast: f64,
    /// 1 − int/ni at τ = 0 for pure identical sources without darks.
    pub pure_contrast: f64,
    pub g2_ni: ModelHistogram,
    pub g2_int: ModelHistogram,
    pub g1: G1Summary,
    pub mode: Mode,
}

/// Two identical sources on a beam splitter.
///
/// Cross-source pairs and their interference come from the leakage-free
/// field correlation. Same-source pairs come from the leakage-on model:
/// its intensity correlation in regression mode, photon pairs in
/// trajectories (n_sequences per source) in Monte Carlo mode.
pub fn hom(sc: &Scenario, seed: u64) -> Result<Hom> {
    let (_, _, g) = clean_correlation(sc, false)?;
    let grid = g.grid;
    let overlap = sc.analysis.overlap;
    let pure = hom_coincidence_model(&g, &g, overlap)?;
    let t1 = t1_from_central_peak(&hom_coincidence_model(&g, &g, 0.0)?, sc)?;
    let half_width = sc.analysis.contrast_half_width.unwrap_or(0.5 * t1.t1);
    let c = pure.central();
    let pure_contrast = if pure.ni[c] > 0.0 { 1.0 - pure.int[c] / pure.ni[c] } else { 0.0 };

    let mode = sc.simulation.mode;
    let doubles: [Vec<f64>; 2] = match mode {
        Mode::Regression => {
            let model = sc.model()?;
            let run = model.simulate_sequence(sc.simulation.dt)?;
            let gl = model.two_time_correlation(&run, grid, true)?;
            let d = doubles_from_regression(&gl)?;
            [d.clone(), d]
        }
        Mode::MonteCarlo => {
            let model = sc.model()?;
            let run = model.simulate_sequence(sc.simulation.dt)?;
            let n = sc.simulation.n_sequences;
            let ea = source_events(sc, &model, &run, n, derive(seed, 11))?;
            let eb = source_events(sc, &model, &run, n, derive(seed, 12))?;
            [doubles_from_events(&ea, grid, n), doubles_from_events(&eb, grid, n)]
        }
    };
    let eff = (sc.detector(0).efficiency, sc.detector(1).efficiency);
    let scenario_darks = [sc.detector(0).dark_rate, sc.detector(1).dark_rate];
    let (model_ni, model_int, dark_rates) = match sc.analysis.dark_fractions {
        Some([fb, fc]) => {
            let probe = CoincidenceModel::build(&g, &g, overlap, eff, (&doubles[0], &doubles[1]), DarkModel { rates: [1e-6; 2] })?;
            let rb = probe.dark_rate_for_fraction(half_width, fb, Arm::Distinguishable)?;
            let rc = probe.dark_rate_for_fraction(half_width, fc, Arm::Indistinguishable)?;
            (probe.with_dark_rate(rb)?, probe.with_dark_rate(rc)?, [rb, rc])
        }
        None => {
            let m = CoincidenceModel::build(&g, &g, overlap, eff, (&doubles[0], &doubles[1]), DarkModel { rates: scenario_darks })?;
            (m.clone(), m, scenario_darks)
        }
    };
    let budget_ni = model_ni.budget(half_width);
    let budget_int = model_int.budget(half_width);
    let n = sc.simulation.n_sequences as f64;
    let (tau, ni, _, exp_ni) = model_ni.binned(sc.analysis.bin);
    let (tau_c, _, int, exp_int) = model_int.binned(sc.analysis.bin);
    Ok(Hom {
        grid,
        t1,
        half_width,
        contrast: two_run_contrast(&budget_ni, &budget_int),
        pure_contrast,
        g2_ni: model_histogram(tau, &ni, &exp_ni, n),
        g2_int: model_histogram(tau_c, &int, &exp_int, n),
        g1: g1_summary(&g, sc.analysis.g1_window)?,
        budget_ni,
        budget_int,
        model_ni,
        model_int,
        dark_rates,
        pure,
        mode,
    })
}

pub struct Coherence {
    pub g1: G1Summary,
    pub t1: ExpFit,
    /// Splitting the beat should show, MHz.
    pub expected_beat_mhz: f64,
}

pub fn g1(sc: &Scenario) -> Result<Coherence> {
    let (_, _, g) = clean_correlation(sc, false)?;
    let t1 = t1_from_central_peak(&hom_coincidence_model(&g, &g, 0.0)?, sc)?;
    Ok(Coherence {
        g1: g1_summary(&g, sc.analysis.g1_window)?,
        t1,
        expected_beat_mhz: sc.atom.expected_beat_mhz(),
    })
}

/// Cross-correlation of two streams, or the auto-correlation of one with
/// self-pairs removed from the τ = 0 bin.
pub fn correlate(streams: &[TimeTagStream], spec: HistogramSpec) -> Result<CorrelationHistogram> {
    match streams {
        [s] => {
            let mut h = cross_correlate(s, s, spec, Normalization::PerPairRate)?;
            if !h.is_empty() {
                let c = h.central();
                h.counts[c] -= s.len() as u64;
                h.errors[c] = (h.counts[c] as f64).sqrt();
            }
            Ok(h)
        }
        [a, b] => cross_correlate(a, b, spec, Normalization::PerPairRate),
        _ => Err(Error::Invalid(format!(
            "correlate needs one or two streams, got {}",
            streams.len()
        ))),
    }
}

/// The emission-phase start, the trigger of arrival-time histograms.
pub fn trigger(sc: &Scenario) -> f64 {
    sc.sequence.phase_start(EMIT)
}
