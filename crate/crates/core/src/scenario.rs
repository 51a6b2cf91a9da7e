//! Scenario files: JSON with `//` and `/* */` comments, frequencies in MHz,
//! times in ns, dark rates in counts/s, magnetic field in gauss.
//!
//! Only `lasers` and `sequence` are required; every other section has
//! documented defaults. Unknown keys are rejected. The digest is the
//! SHA-256 of the file bytes, so any edit (comments included) changes it.

use crate::atom::{AtomModel, LaserField, Transition};
use crate::dynamics::Model;
use crate::error::{Error, Result};
use crate::photostream::DetectorModel;
use crate::sequence::{Leakage, Phase, PulseSequence, EMIT};
use crate::units::mhz_to_rad_per_ns;
use crate::C64;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;

/// Replace comments by spaces, keeping newlines so that parser positions
/// still point into the original text.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_string = false;
    while let Some(c) = chars.next() {
        if in_string {
            out.push(c);
            match c {
                '\\' => {
                    if let Some(n) = chars.next() {
                        out.push(n);
                    }
                }
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match (c, chars.peek()) {
            ('"', _) => {
                in_string = true;
                out.push(c);
            }
            ('/', Some('/')) => {
                out.push_str("  ");
                chars.next();
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    out.push(' ');
                    chars.next();
                }
            }
            ('/', Some('*')) => {
                out.push_str("  ");
                chars.next();
                let mut prev = ' ';
                for n in chars.by_ref() {
                    out.push(if n == '\n' { '\n' } else { ' ' });
                    if prev == '*' && n == '/' {
                        break;
                    }
                    prev = n;
                }
            }
            _ => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAtom {
    gamma_p_mhz: f64,
    branching_s: f64,
    b_field_gauss: f64,
    g_s: f64,
    g_p: f64,
    g_d: f64,
    beat_override_mhz: Option<f64>,
}

impl Default for RawAtom {
    fn default() -> Self {
        let a = AtomModel::default();
        Self {
            gamma_p_mhz: 24.0,
            branching_s: a.branching_s,
            b_field_gauss: a.b_field,
            g_s: a.g_s,
            g_p: a.g_p,
            g_d: a.g_d,
            beat_override_mhz: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawPolarization {
    Named(String),
    /// (a₋, a₀, a₊) as [re, im] pairs.
    Components([[f64; 2]; 3]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLaser {
    rabi_mhz: f64,
    detuning_mhz: f64,
    #[serde(default)]
    polarization: Option<RawPolarization>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLasers {
    blue: Option<RawLaser>,
    ir: Option<RawLaser>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    duration_ns: f64,
    blue_scale: f64,
    ir_scale: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeakage {
    fraction: f64,
    duration_ns: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    phases: [RawPhase; 3],
    repetition_period_ns: f64,
    #[serde(default)]
    leakage: RawLeakage,
    #[serde(default)]
    switching_edge_ns: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    efficiency: f64,
    #[serde(default)]
    dark_rate_per_s: f64,
    /// Defaults to the emission phase.
    #[serde(default)]
    gate_windows_ns: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    jitter_sigma_ns: f64,
    #[serde(default = "one")]
    resolution_ns: f64,
}

fn one() -> f64 {
    1.0
}

/// How two-photon quantities obtain their same-source pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Intensity correlation by quantum regression.
    Regression,
    /// Photon pairs counted in quantum-jump trajectories.
    MonteCarlo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Regression => "regression",
            Mode::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulation {
    dt_ns: f64,
    seed: u64,
    n_sequences: u64,
    mode: Mode,
    correlation_step_ns: f64,
    max_tau_ns: f64,
}

impl Default for RawSimulation {
    fn default() -> Self {
        Self {
            dt_ns: 1.0,
            seed: 1,
            n_sequences: 100_000,
            mode: Mode::Regression,
            correlation_step_ns: 2.0,
            max_tau_ns: 600.0,
        }
    }
}

/// Fit window on the delay (or arrival-time) axis.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum WindowSpec {
    /// Fixed [a, b] in ns.
    AbsoluteNs([f64; 2]),
    /// [a·T1, b·T1], iterated until T1 settles.
    RelativeT1([f64; 2]),
}

impl WindowSpec {
    pub fn fit_window(self) -> crate::correlator::FitWindow {
        use crate::correlator::FitWindow;
        match self {
            WindowSpec::AbsoluteNs([a, b]) => FitWindow::Absolute(a, b),
            WindowSpec::RelativeT1([a, b]) => FitWindow::Relative(a, b),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    ir_scales: Vec<f64>,
    #[serde(default)]
    weak_points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAnalysis {
    bin_ns: f64,
    histogram_range_ns: Option<f64>,
    overlap: f64,
    t1_window: WindowSpec,
    wavepacket_window: WindowSpec,
    g1_window_ns: [f64; 2],
    contrast_half_width_ns: Option<f64>,
    dark_fractions: Option<[f64; 2]>,
    signal_to_background: Option<f64>,
    scan: Option<RawScan>,
}

impl Default for RawAnalysis {
    fn default() -> Self {
        Self {
            bin_ns: 25.0,
            histogram_range_ns: None,
            overlap: 1.0,
            t1_window: WindowSpec::AbsoluteNs([0.0, 500.0]),
            wavepacket_window: WindowSpec::RelativeT1([1.0, 5.0]),
            g1_window_ns: [0.0, 500.0],
            contrast_half_width_ns: None,
            dark_fractions: None,
            signal_to_background: None,
            scan: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutputs {
    directory: String,
    formats: Vec<StreamFormat>,
}

impl Default for RawOutputs {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            formats: vec![StreamFormat::Csv],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    atom: RawAtom,
    lasers: RawLasers,
    sequence: RawSequence,
    #[serde(default)]
    detectors: Option<Vec<RawDetector>>,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    outputs: RawOutputs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Population sampling step, ns.
    pub dt: f64,
    pub seed: u64,
    pub n_sequences: u64,
    pub mode: Mode,
    /// Emission-time and delay step of the regression grid, ns.
    pub correlation_step: f64,
    pub max_tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    /// IR amplitude scales of the emission phase; intensity ∝ scale².
    pub ir_scales: Vec<f64>,
    /// How many of the lowest intensities form the weak regime checked
    /// against the adiabatic-elimination oracle (default: all).
    pub weak_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub bin: f64,
    /// Half range of click histograms, ns.
    pub histogram_range: f64,
    pub overlap: f64,
    /// Window for T1 from the distinguishable central peak.
    pub t1_window: WindowSpec,
    /// Window for T1 from arrival-time histograms.
    pub wavepacket_window: WindowSpec,
    pub g1_window: (f64, f64),
    /// Central window half width for the contrast; None means T1/2.
    pub contrast_half_width: Option<f64>,
    /// Target dark-count fractions of the (distinguishable, overlapping)
    /// central windows; dark rates are calibrated per experiment.
    pub dark_fractions: Option<[f64; 2]>,
    /// Target ratio of signal to dark clicks inside the gate.
    pub signal_to_background: Option<f64>,
    pub scan: Option<Scan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub directory: String,
    pub formats: Vec<StreamFormat>,
}

/// A validated scenario in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub atom: AtomModel,
    pub lasers: Vec<LaserField>,
    pub sequence: PulseSequence,
    pub detectors: Vec<DetectorModel>,
    pub simulation: Simulation,
    pub analysis: Analysis,
    pub outputs: Outputs,
    /// Hex SHA-256 of the scenario file.
    pub digest: String,
}

fn polarization(p: &Option<RawPolarization>, field: &str) -> Result<[C64; 3]> {
    let zero = C64::new(0.0, 0.0);
    let unit = C64::new(1.0, 0.0);
    Ok(match p {
        None => LaserField::perpendicular(),
        Some(RawPolarization::Named(n)) => match n.as_str() {
            "perpendicular" => LaserField::perpendicular(),
            "sigma_minus" => [unit, zero, zero],
            "pi" => [zero, unit, zero],
            "sigma_plus" => [zero, zero, unit],
            other => {
                return Err(Error::Invalid(format!(
                    "{field}: unknown polarization {other:?} (perpendicular, sigma_minus, pi, sigma_plus or components)"
                )))
            }
        },
        Some(RawPolarization::Components(c)) => c.map(|[re, im]| C64::new(re, im)),
    })
}

fn laser(raw: &RawLaser, transition: Transition, field: &str) -> Result<LaserField> {
    let l = LaserField::new(transition, mhz_to_rad_per_ns(raw.rabi_mhz), mhz_to_rad_per_ns(raw.detuning_mhz))
        .with_polarization(polarization(&raw.polarization, field)?);
    l.validate().map_err(|e| Error::Invalid(format!("{field}: {e}")))?;
    Ok(l)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(msg()))
    }
}

impl RawScenario {
    fn validate(self, digest: String) -> Result<Scenario> {
        let a = &self.atom;
        let atom = AtomModel {
            g_s: a.g_s,
            g_p: a.g_p,
            g_d: a.g_d,
            gamma_p: mhz_to_rad_per_ns(a.gamma_p_mhz),
            branching_s: a.branching_s,
            b_field: a.b_field_gauss,
            beat_override_mhz: a.beat_override_mhz,
            ..AtomModel::default()
        };
        atom.validate()?;
        if let Some(b) = a.beat_override_mhz {
            check(b > 0.0 && b.is_finite(), || format!("atom.beat_override_mhz must be positive, got {b}"))?;
        }

        let mut lasers = Vec::new();
        if let Some(b) = &self.lasers.blue {
            lasers.push(laser(b, Transition::Blue397, "lasers.blue")?);
        }
        if let Some(r) = &self.lasers.ir {
            lasers.push(laser(r, Transition::Ir866, "lasers.ir")?);
        }

        let s = &self.sequence;
        let sequence = PulseSequence {
            phases: std::array::from_fn(|i| Phase {
                duration: s.phases[i].duration_ns,
                blue_scale: s.phases[i].blue_scale,
                ir_scale: s.phases[i].ir_scale,
            }),
            repetition_period: s.repetition_period_ns,
            leakage: Leakage {
                fraction: s.leakage.fraction,
                duration: s.leakage.duration_ns,
            },
            switching_edge: s.switching_edge_ns,
        };
        sequence.validate()?;
        let period = sequence.repetition_period;
        let (ea, eb) = sequence.emission_window();

        let raw_detectors = self.detectors.unwrap_or_else(|| {
            vec![RawDetector {
                efficiency: 1.0,
                dark_rate_per_s: 0.0,
                gate_windows_ns: None,
                jitter_sigma_ns: 0.0,
                resolution_ns: 1.0,
            }]
        });
        check(!raw_detectors.is_empty(), || "detectors: at least one detector is required".into())?;
        let mut detectors = Vec::new();
        for (i, d) in raw_detectors.iter().enumerate() {
            let det = DetectorModel {
                efficiency: d.efficiency,
                dark_rate: d.dark_rate_per_s * 1e-9,
                gate_windows: match &d.gate_windows_ns {
                    Some(w) => w.iter().map(|&[a, b]| (a, b)).collect(),
                    None => vec![(ea, eb)],
                },
                jitter_sigma: d.jitter_sigma_ns,
                resolution: d.resolution_ns,
            };
            det.validate(period).map_err(|e| Error::Invalid(format!("detectors[{i}].{}", strip_prefix(e))))?;
            let ticks = period / det.resolution;
            check((ticks - ticks.round()).abs() < 1e-6, || {
                format!("detectors[{i}].resolution_ns: period {period} ns is not a multiple of {} ns", det.resolution)
            })?;
            detectors.push(det);
        }
        let res = detectors[0].resolution;
        check(detectors.iter().all(|d| d.resolution == res), || {
            "detectors: all detectors must share one resolution_ns".into()
        })?;

        let m = &self.simulation;
        check(m.dt_ns > 0.0 && m.dt_ns.is_finite(), || format!("simulation.dt_ns must be positive, got {}", m.dt_ns))?;
        check(m.n_sequences >= 1, || "simulation.n_sequences must be at least 1".into())?;
        check(m.correlation_step_ns > 0.0, || "simulation.correlation_step_ns must be positive".into())?;
        check(m.max_tau_ns >= m.correlation_step_ns, || {
            "simulation.max_tau_ns must be at least one correlation step".into()
        })?;
        let steps = (eb - ea) / m.correlation_step_ns;
        check((steps - steps.round()).abs() < 1e-6, || {
            format!(
                "simulation.correlation_step_ns: emission phase ({} ns) is not a whole number of steps",
                eb - ea
            )
        })?;

        let x = &self.analysis;
        check(x.bin_ns > 0.0, || "analysis.bin_ns must be positive".into())?;
        let bin_ticks = x.bin_ns / res;
        check((bin_ticks - bin_ticks.round()).abs() < 1e-9 && bin_ticks >= 1.0, || {
            format!("analysis.bin_ns: {} ns is not a multiple of the resolution {res} ns", x.bin_ns)
        })?;
        check((0.0..=1.0).contains(&x.overlap), || format!("analysis.overlap {} outside [0, 1]", x.overlap))?;
        for (name, w) in [("t1_window", x.t1_window), ("wavepacket_window", x.wavepacket_window)] {
            let [a, b] = match w {
                WindowSpec::AbsoluteNs(v) | WindowSpec::RelativeT1(v) => v,
            };
            check(a >= 0.0 && b > a, || format!("analysis.{name}: need 0 <= start < end, got [{a}, {b}]"))?;
        }
        let [ga, gb] = x.g1_window_ns;
        check(ga >= 0.0 && gb > ga, || format!("analysis.g1_window_ns: need 0 <= start < end, got [{ga}, {gb}]"))?;
        if let Some(h) = x.contrast_half_width_ns {
            check(h > 0.0, || "analysis.contrast_half_width_ns must be positive".into())?;
        }
        if let Some(f) = x.dark_fractions {
            check(f.iter().all(|v| (0.0..1.0).contains(v)), || {
                "analysis.dark_fractions must lie in [0, 1)".into()
            })?;
        }
        if let Some(r) = x.signal_to_background {
            check(r > 0.0, || "analysis.signal_to_background must be positive".into())?;
        }
        let scan = match &x.scan {
            Some(sc) => {
                check(sc.ir_scales.len() >= 2, || "analysis.scan.ir_scales needs at least two values".into())?;
                check(sc.ir_scales.iter().all(|s| (0.0..=1.0).contains(s)), || {
                    "analysis.scan.ir_scales must lie in [0, 1]".into()
                })?;
                let weak = sc.weak_points.unwrap_or(sc.ir_scales.len());
                check((2..=sc.ir_scales.len()).contains(&weak), || {
                    "analysis.scan.weak_points must be between 2 and the number of scan points".into()
                })?;
                Some(Scan {
                    ir_scales: sc.ir_scales.clone(),
                    weak_points: weak,
                })
            }
            None => None,
        };
        let range = x.histogram_range_ns.unwrap_or(2.5 * period);
        check(range >= 0.0, || "analysis.histogram_range_ns must be >= 0".into())?;

        Ok(Scenario {
            name: self.name.unwrap_or_else(|| "scenario".into()),
            atom,
            lasers,
            sequence,
            detectors,
            simulation: Simulation {
                dt: m.dt_ns,
                seed: m.seed,
                n_sequences: m.n_sequences,
                mode: m.mode,
                correlation_step: m.correlation_step_ns,
                max_tau: m.max_tau_ns,
            },
            analysis: Analysis {
                bin: x.bin_ns,
                histogram_range: range,
                overlap: x.overlap,
                t1_window: x.t1_window,
                wavepacket_window: x.wavepacket_window,
                g1_window: (ga, gb),
                contrast_half_width: x.contrast_half_width_ns,
                dark_fractions: x.dark_fractions,
                signal_to_background: x.signal_to_background,
                scan,
            },
            outputs: Outputs {
                directory: self.outputs.directory,
                formats: self.outputs.formats,
            },
            digest,
        })
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Invalid(m) => m,
        other => other.to_string(),
    }
}

/// Parse and validate scenario text.
pub fn parse_str(text: &str) -> Result<Scenario> {
    let digest = hex(&Sha256::digest(text.as_bytes()));
    let raw: RawScenario = serde_json::from_str(&strip_comments(text)).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
    })?;
    raw.validate(digest)
}

/// Read, parse and validate a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Scenario {
    pub fn model(&self) -> Result<Model> {
        Model::new(self.atom.clone(), self.lasers.clone(), self.sequence.clone())
    }

    /// The same scenario with the blue leakage switched off.
    pub fn without_leakage(&self) -> Self {
        let mut s = self.clone();
        s.sequence.leakage.fraction = 0.0;
        s
    }

    /// The same scenario with the emission-phase IR scale replaced.
    pub fn with_emission_ir_scale(&self, scale: f64) -> Self {
        let mut s = self.clone();
        s.sequence.phases[EMIT].ir_scale = scale;
        s
    }

    pub fn detector(&self, i: usize) -> &DetectorModel {
        &self.detectors[i.min(self.detectors.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        // only the required sections
        "lasers": { "ir": { "rabi_mhz": 10, "detuning_mhz": -55 } },
        "sequence": {
            "phases": [
                { "duration_ns": 100, "blue_scale": 0, "ir_scale": 0 },
                { "duration_ns": 100, "blue_scale": 0, "ir_scale": 0 },
                { "duration_ns": 500, "blue_scale": 0, "ir_scale": 1 }
            ],
            "repetition_period_ns": 1000 /* idle after emission */
        }
    }"#;

    #[test]
    fn comments_become_spaces() {
        let s = strip_comments("{\"a\": \"//x\", // c\n/* d\n */ \"b\": 1}");
        assert_eq!(s.lines().count(), 3);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"], "//x");
        assert_eq!(v["b"], 1);
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_str(MINIMAL).unwrap();
        assert_eq!(s.atom, AtomModel::default());
        assert_eq!(s.simulation.n_sequences, 100_000);
        assert_eq!(s.simulation.mode, Mode::Regression);
        assert_eq!(s.detectors.len(), 1);
        assert_eq!(s.detectors[0].gate_windows, vec![(200.0, 700.0)]);
        assert_eq!(s.analysis.overlap, 1.0);
        assert_eq!(s.digest.len(), 64);
    }

    #[test]
    fn gamma_p_is_converted() {
        let s = parse_str(&MINIMAL.replacen('{', "{ \"atom\": { \"gamma_p_mhz\": 24 },", 1)).unwrap();
        assert!((s.atom.gamma_p - 2.0 * std::f64::consts::PI * 24e-3).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_has_position() {
        let text = MINIMAL.replacen("\"lasers\"", "\"lazers\": 1, \"lasers\"", 1);
        match parse_str(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("lazers"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_gates_name_the_field() {
        let text = MINIMAL.replacen(
            '{',
            "{ \"detectors\": [{ \"efficiency\": 0.5, \"gate_windows_ns\": [[200, 400], [300, 700]] }],",
            1,
        );
        let err = parse_str(&text).unwrap_err().to_string();
        assert!(err.contains("detectors[0].gate_windows"), "{err}");
    }
}
