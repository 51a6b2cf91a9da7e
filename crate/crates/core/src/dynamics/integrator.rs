//! Adaptive Dormand–Prince 5(4) integration of the Lindblad equation.
//!
//! Works on arbitrary 8×8 matrices, so the same propagator serves density
//! matrices and the operator-weighted states of the regression theorem.
//! Steps never straddle a drive breakpoint.

use super::liouvillian::Liouvillian;
use crate::error::{Error, Result};
use crate::sequence::{DriveProfile, Segment};
use crate::{Mat8, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Below this step (ns) a rejected step is reported as divergence.
    pub min_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            min_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &Mat8, terms: &[(f64, &Mat8)], h: f64) -> Mat8 {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            out += *k * C64::new(c * h, 0.0);
        }
    }
    out
}

pub struct Integrator<'a> {
    generator: &'a Liouvillian,
    drive: &'a DriveProfile,
    tol: Tolerances,
    step: f64,
    pub stats: Stats,
}

impl<'a> Integrator<'a> {
    pub fn new(generator: &'a Liouvillian, drive: &'a DriveProfile, tol: Tolerances) -> Self {
        Self {
            generator,
            drive,
            tol,
            step: 0.05,
            stats: Stats::default(),
        }
    }

    /// Propagate `x` from `t0` to `t1`.
    pub fn propagate(&mut self, x: &mut Mat8, t0: f64, t1: f64) -> Result<()> {
        self.propagate_sampled(x, t0, t1, &[], |_, _, _| {})
    }

    /// Propagate `x` from `t0` to `t1`, calling `visit(k, t, x)` at each
    /// `samples[k]` that lies in (t0, t1]. Samples must be ascending.
    pub fn propagate_sampled(
        &mut self,
        x: &mut Mat8,
        t0: f64,
        t1: f64,
        samples: &[f64],
        mut visit: impl FnMut(usize, f64, &Mat8),
    ) -> Result<()> {
        let mut stops: Vec<(f64, Option<usize>)> = self
            .drive
            .breakpoints(t0, t1)
            .into_iter()
            .map(|t| (t, None))
            .collect();
        stops.extend(
            samples
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > t0 && s <= t1)
                .map(|(k, &s)| (s, Some(k))),
        );
        stops.push((t1, None));
        stops.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut t = t0;
        for (stop, sample) in stops {
            if stop > t {
                let seg = self.drive.segment_at(0.5 * (t + stop));
                self.integrate_segment(x, t, stop, &seg)?;
                t = stop;
            }
            if let Some(k) = sample {
                visit(k, stop, x);
            }
        }
        Ok(())
    }

    fn integrate_segment(&mut self, y: &mut Mat8, a: f64, b: f64, seg: &Segment) -> Result<()> {
        let gen = self.generator;
        let constant = seg.is_constant().then(|| {
            let (sb, sr) = seg.scales_at(a);
            gen.hamiltonian(sb, sr)
        });
        let ham = |t: f64| -> Mat8 {
            match constant {
                Some(h) => h,
                None => {
                    let (sb, sr) = seg.scales_at(t);
                    gen.hamiltonian(sb, sr)
                }
            }
        };
        let f = |t: f64, x: &Mat8| gen.apply(&ham(t), x);

        let mut t = a;
        let mut h = self.step;
        let mut k1 = f(t, y);
        while t < b {
            let last = h >= b - t;
            let hs = if last { b - t } else { h };
            let k2 = f(t + C2 * hs, &axpy(y, &[(A21, &k1)], hs));
            let k3 = f(t + C3 * hs, &axpy(y, &[(A31, &k1), (A32, &k2)], hs));
            let k4 = f(t + C4 * hs, &axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
            let k5 = f(
                t + C5 * hs,
                &axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
            );
            let k6 = f(
                t + hs,
                &axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs),
            );
            let y5 = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
            let k7 = f(t + hs, &y5);
            let mut acc = 0.0;
            for i in 0..64 {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                let sc = self.tol.atol + self.tol.rtol * y[i].norm().max(y5[i].norm());
                acc += (e.norm() / sc).powi(2);
            }
            let err = (acc / 64.0).sqrt();
            if err <= 1.0 {
                self.stats.accepted += 1;
                *y = y5;
                k1 = k7;
                t = if last { b } else { t + hs };
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a clamped final step says nothing about the natural step size
                if !last || hs >= h {
                    h = hs * grow;
                }
            } else {
                self.stats.rejected += 1;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < self.tol.min_step {
                    return Err(Error::Divergence {
                        t,
                        min_step: self.tol.min_step,
                    });
                }
            }
        }
        self.step = h;
        Ok(())
    }
}
