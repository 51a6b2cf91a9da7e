//! Pulse sequences and the piecewise-linear laser drive they produce.
//!
//! A sequence has three phases (cool, prepare, emit) followed by an idle
//! gap up to the repetition period. Lasers switch with linear amplitude
//! ramps of `switching_edge`: a laser turning on ramps up starting at the
//! phase boundary, a laser turning off ramps down ending at the boundary, so
//! no laser is ever on outside its nominal phases. Blue leakage is a
//! constant residual amplitude √fraction for the first `leakage.duration`
//! of the emission phase.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub duration: f64,
    /// Blue (397 nm) Rabi amplitude scale, 0..1.
    pub blue_scale: f64,
    /// Infrared (866 nm) Rabi amplitude scale, 0..1.
    pub ir_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Leakage {
    /// Residual blue intensity (amplitude squared) during the emission phase.
    pub fraction: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    /// Cool, prepare, emit.
    pub phases: [Phase; 3],
    pub repetition_period: f64,
    pub leakage: Leakage,
    pub switching_edge: f64,
}

pub const COOL: usize = 0;
pub const PREPARE: usize = 1;
pub const EMIT: usize = 2;

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.phases.iter().map(|p| p.duration).sum();
        if !(self.repetition_period > 0.0) || total > self.repetition_period * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "sequence.phases: total duration {total} ns exceeds repetition period {} ns",
                self.repetition_period
            )));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration >= 0.0) {
                return Err(Error::Invalid(format!("sequence.phases[{i}].duration must be >= 0")));
            }
            for (name, s) in [("blue", p.blue_scale), ("ir", p.ir_scale)] {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::Invalid(format!(
                        "sequence.phases[{i}].{name} scale {s} outside [0, 1]"
                    )));
                }
            }
            if p.duration > 0.0 && p.duration < 2.0 * self.switching_edge {
                return Err(Error::Invalid(format!(
                    "sequence.switching_edge: phase {i} ({} ns) is shorter than two switching edges",
                    p.duration
                )));
            }
        }
        let l = &self.leakage;
        if !(0.0..=1.0).contains(&l.fraction) || !(l.duration >= 0.0) {
            return Err(Error::Invalid("sequence.leakage: fraction must be in [0, 1] and duration >= 0".into()));
        }
        if l.duration > self.phases[EMIT].duration {
            return Err(Error::Invalid(format!(
                "sequence.leakage.duration {} ns exceeds the emission phase ({} ns)",
                l.duration, self.phases[EMIT].duration
            )));
        }
        if !(self.switching_edge >= 0.0) {
            return Err(Error::Invalid("sequence.switching_edge must be >= 0".into()));
        }
        Ok(())
    }

    pub fn phase_start(&self, phase: usize) -> f64 {
        self.phases[..phase].iter().map(|p| p.duration).sum()
    }

    pub fn phase_end(&self, phase: usize) -> f64 {
        self.phase_start(phase) + self.phases[phase].duration
    }

    /// (start, end) of the emission phase within the period.
    pub fn emission_window(&self) -> (f64, f64) {
        (self.phase_start(EMIT), self.phase_end(EMIT))
    }

    pub fn drive(&self) -> DriveProfile {
        let t1 = self.phase_start(PREPARE);
        let t2 = self.phase_start(EMIT);
        let t3 = self.phase_end(EMIT);
        let period = self.repetition_period;
        let leak = self.leakage.fraction.sqrt();
        let [cool, prep, emit] = self.phases;

        let mut blue = vec![
            Interval::ramped(0.0, t1, cool.blue_scale),
            Interval::ramped(t1, t2, prep.blue_scale),
        ];
        let leak_end = t2 + self.leakage.duration;
        if self.leakage.duration > 0.0 && leak > emit.blue_scale {
            blue.push(Interval::ramped(t2, leak_end, leak));
            blue.push(Interval::abrupt(leak_end, t3, emit.blue_scale));
        } else {
            blue.push(Interval::ramped(t2, t3, emit.blue_scale));
        }
        blue.push(Interval::ramped(t3, period, 0.0));

        let ir = vec![
            Interval::ramped(0.0, t1, cool.ir_scale),
            Interval::ramped(t1, t2, prep.ir_scale),
            Interval::ramped(t2, t3, emit.ir_scale),
            Interval::ramped(t3, period, 0.0),
        ];

        let blue = pieces(blue, self.switching_edge);
        let ir = pieces(ir, self.switching_edge);
        DriveProfile::from_pieces(period, &blue, &ir)
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    start: f64,
    end: f64,
    level: f64,
    ramp_in: bool,
}

impl Interval {
    fn ramped(start: f64, end: f64, level: f64) -> Self {
        Self { start, end, level, ramp_in: true }
    }
    fn abrupt(start: f64, end: f64, level: f64) -> Self {
        Self { start, end, level, ramp_in: false }
    }
}

/// Linear piece of one laser's amplitude: value goes from `v0` at `start` to
/// `v1` at `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    start: f64,
    end: f64,
    v0: f64,
    v1: f64,
}

impl Piece {
    fn at(&self, t: f64) -> f64 {
        if self.end == self.start {
            return self.v0;
        }
        self.v0 + (self.v1 - self.v0) * (t - self.start) / (self.end - self.start)
    }
}

fn pieces(intervals: Vec<Interval>, edge: f64) -> Vec<Piece> {
    let iv: Vec<Interval> = intervals.into_iter().filter(|i| i.end > i.start).collect();
    let n = iv.len();
    let mut out = Vec::new();
    for k in 0..n {
        let cur = iv[k];
        let prev = iv[(k + n - 1) % n];
        let next = iv[(k + 1) % n];
        let mut a = cur.start;
        let mut b = cur.end;
        let ramp_up = edge > 0.0 && cur.ramp_in && prev.level < cur.level;
        let ramp_down = edge > 0.0 && next.ramp_in && next.level < cur.level;
        if ramp_up {
            out.push(Piece { start: a, end: a + edge, v0: prev.level, v1: cur.level });
            a += edge;
        }
        let mut tail = None;
        if ramp_down {
            tail = Some(Piece { start: b - edge, end: b, v0: cur.level, v1: next.level });
            b -= edge;
        }
        if b > a {
            out.push(Piece { start: a, end: b, v0: cur.level, v1: cur.level });
        }
        out.extend(tail);
    }
    out
}

/// Linear variation of a scale factor over one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub from: f64,
    pub to: f64,
}

impl Ramp {
    pub fn constant(v: f64) -> Self {
        Self { from: v, to: v }
    }
    pub fn is_constant(&self) -> bool {
        self.from == self.to
    }
}

/// Interval on which both laser scales vary linearly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub blue: Ramp,
    pub ir: Ramp,
}

impl Segment {
    /// Scales at absolute time `t` measured in this segment's own period
    /// frame; valid on the closed interval.
    pub fn scales_at(&self, t: f64) -> (f64, f64) {
        let len = self.end - self.start;
        if !len.is_finite() || len == 0.0 || (self.blue.is_constant() && self.ir.is_constant()) {
            return (self.blue.from, self.ir.from);
        }
        let x = ((t - self.start) / len).clamp(0.0, 1.0);
        (
            self.blue.from + (self.blue.to - self.blue.from) * x,
            self.ir.from + (self.ir.to - self.ir.from) * x,
        )
    }

    pub fn is_constant(&self) -> bool {
        self.blue.is_constant() && self.ir.is_constant()
    }
}

/// Periodic (or constant, with infinite period) piecewise-linear drive.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveProfile {
    pub period: f64,
    pub segments: Vec<Segment>,
}

impl DriveProfile {
    pub fn constant(blue: f64, ir: f64) -> Self {
        Self {
            period: f64::INFINITY,
            segments: vec![Segment {
                start: 0.0,
                end: f64::INFINITY,
                blue: Ramp::constant(blue),
                ir: Ramp::constant(ir),
            }],
        }
    }

    fn from_pieces(period: f64, blue: &[Piece], ir: &[Piece]) -> Self {
        let mut cuts: Vec<f64> = blue
            .iter()
            .chain(ir)
            .flat_map(|p| [p.start, p.end])
            .chain([0.0, period])
            .collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let find = |ps: &[Piece], a: f64, b: f64| -> Ramp {
            let mid = 0.5 * (a + b);
            let p = ps
                .iter()
                .find(|p| p.start <= mid && mid < p.end)
                .copied()
                .unwrap_or(Piece { start: a, end: b, v0: 0.0, v1: 0.0 });
            Ramp { from: p.at(a), to: p.at(b) }
        };
        let segments = cuts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| Segment {
                start: w[0],
                end: w[1],
                blue: find(blue, w[0], w[1]),
                ir: find(ir, w[0], w[1]),
            })
            .collect();
        Self { period, segments }
    }

    /// Offset of the period containing `t` and `t` reduced into it.
    fn reduce(&self, t: f64) -> (f64, f64) {
        if self.period.is_infinite() {
            (0.0, t)
        } else {
            let k = (t / self.period).floor();
            (k * self.period, t - k * self.period)
        }
    }

    fn index_of(&self, local: f64) -> usize {
        match self
            .segments
            .binary_search_by(|s| s.start.total_cmp(&local))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Segment containing `t`, shifted into absolute time.
    pub fn segment_at(&self, t: f64) -> Segment {
        let (offset, local) = self.reduce(t);
        let mut s = self.segments[self.index_of(local)];
        s.start += offset;
        s.end += offset;
        s
    }

    pub fn scales(&self, t: f64) -> (f64, f64) {
        self.segment_at(t).scales_at(t)
    }

    /// Segment boundaries strictly inside (a, b), ascending.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if self.period.is_infinite() || !(b > a) {
            return out;
        }
        let first = (a / self.period).floor() as i64;
        let last = (b / self.period).floor() as i64;
        for k in first..=last {
            let offset = k as f64 * self.period;
            for s in &self.segments {
                let t = s.start + offset;
                if t > a && t < b {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Constant scales over [a, b], if the drive does not vary there.
    pub fn constant_on(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let mid = self.segment_at(0.5 * (a + b));
        if !mid.is_constant() {
            return None;
        }
        let value = (mid.blue.from, mid.ir.from);
        let mut t = a;
        for bp in self.breakpoints(a, b).into_iter().chain([b]) {
            let seg = self.segment_at(0.5 * (t + bp));
            if !seg.is_constant() || (seg.blue.from, seg.ir.from) != value {
                return None;
            }
            t = bp;
        }
        Some(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig4_like() -> PulseSequence {
        PulseSequence {
            phases: [
                Phase { duration: 1000.0, blue_scale: 1.0, ir_scale: 1.0 },
                Phase { duration: 400.0, blue_scale: 1.0, ir_scale: 0.0 },
                Phase { duration: 500.0, blue_scale: 0.0, ir_scale: 1.0 },
            ],
            repetition_period: 2000.0,
            leakage: Leakage { fraction: 0.05, duration: 200.0 },
            switching_edge: 10.0,
        }
    }

    #[test]
    fn phase_windows() {
        let s = fig4_like();
        assert_eq!(s.emission_window(), (1400.0, 1900.0));
        assert!(s.validate().is_ok());
    }

    #[test]
    fn ramps_stay_inside_nominal_phases() {
        let s = fig4_like();
        let d = s.drive();
        // IR ramps down over the last edge of cooling
        assert_eq!(d.scales(995.0).1, 0.5);
        assert_eq!(d.scales(1000.0 + 1e-9).1, 0.0);
        // blue ramps from 1 to the leakage level over the end of phase II
        let leak = 0.05f64.sqrt();
        assert!((d.scales(1395.0).0 - (1.0 + leak) / 2.0).abs() < 1e-12);
        assert!((d.scales(1450.0).0 - leak).abs() < 1e-15);
        // leakage ends abruptly
        assert_eq!(d.scales(1600.0 + 1e-6).0, 0.0);
        // IR ramps up at the start of emission
        assert!((d.scales(1405.0).1 - 0.5).abs() < 1e-12);
        // idle
        assert_eq!(d.scales(1950.0), (0.0, 0.0));
        // periodic: blue ramps up at t = 0
        assert!((d.scales(2005.0).0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_and_constancy() {
        let d = fig4_like().drive();
        let bps = d.breakpoints(1380.0, 1620.0);
        assert_eq!(bps, vec![1390.0, 1400.0, 1410.0, 1600.0]);
        assert_eq!(d.constant_on(1420.0, 1500.0), Some((0.05f64.sqrt(), 1.0)));
        assert_eq!(d.constant_on(1595.0, 1605.0), None);
        assert_eq!(d.constant_on(1405.0, 1406.0), None);
        assert_eq!(d.breakpoints(1950.0, 2050.0), vec![2000.0, 2010.0]);
    }

    #[test]
    fn validation_catches_overlong_sequences() {
        let mut s = fig4_like();
        s.repetition_period = 1500.0;
        assert!(s.validate().is_err());
        let mut s = fig4_like();
        s.leakage.duration = 600.0;
        assert!(s.validate().is_err());
    }
}
