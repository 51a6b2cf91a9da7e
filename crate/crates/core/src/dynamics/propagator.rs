//! Piecewise propagation of the master equation.
//!
//! On intervals where the drive is constant the exact superoperator
//! exp(L·h) is used and cached by (scales, h); ramps go through the
//! adaptive integrator. Interval lengths are keyed to 1e-9 ns, far below
//! any physical timescale.

use super::integrator::{Integrator, Stats};
use super::liouvillian::{unvectorize, vectorize};
use super::master::Model;
use crate::error::Result;
use crate::{Mat8, C64};
use nalgebra::DMatrix;
use std::collections::HashMap;

type Key = (u64, u64, i64);

fn key(scales: (f64, f64), h: f64) -> Key {
    (scales.0.to_bits(), scales.1.to_bits(), (h * 1e9).round() as i64)
}

pub(crate) struct Stepper<'m> {
    model: &'m Model,
    integ: Integrator<'m>,
    cache: HashMap<Key, DMatrix<C64>>,
}

impl<'m> Stepper<'m> {
    pub(crate) fn new(model: &'m Model) -> Self {
        Self {
            model,
            integ: model.integrator(),
            cache: HashMap::new(),
        }
    }

    pub(crate) fn stats(&self) -> Stats {
        self.integ.stats
    }

    /// exp(L·h) for constant scales.
    pub(crate) fn exact(&mut self, scales: (f64, f64), h: f64) -> &DMatrix<C64> {
        let gen = &self.model.generator;
        self.cache
            .entry(key(scales, h))
            .or_insert_with(|| (gen.superoperator(scales.0, scales.1) * C64::new(h, 0.0)).exp())
    }

    /// Superoperator of [a, b], constant drive or not.
    pub(crate) fn superoperator(&mut self, a: f64, b: f64) -> Result<DMatrix<C64>> {
        if let Some(s) = self.model.drive.constant_on(a, b) {
            return Ok(self.exact(s, b - a).clone());
        }
        let mut m = DMatrix::zeros(64, 64);
        for col in 0..64 {
            let mut e = Mat8::zeros();
            e[(col / 8, col % 8)] = C64::new(1.0, 0.0);
            self.integ.propagate(&mut e, a, b)?;
            m.set_column(col, &vectorize(&e));
        }
        Ok(m)
    }

    /// Advance `x` over [a, b] within which the drive has no breakpoint.
    fn advance(&mut self, x: &mut Mat8, a: f64, b: f64) -> Result<()> {
        match self.model.drive.constant_on(a, b) {
            Some(s) => {
                let p = self.exact(s, b - a);
                *x = unvectorize(&(p * vectorize(x)));
                Ok(())
            }
            None => self.integ.propagate(x, a, b),
        }
    }

    /// Propagate from `t0` to `t1`, calling `visit(k, t, x)` at each
    /// ascending sample time in (t0, t1].
    pub(crate) fn run(
        &mut self,
        x: &mut Mat8,
        t0: f64,
        t1: f64,
        samples: &[f64],
        mut visit: impl FnMut(usize, f64, &Mat8),
    ) -> Result<()> {
        let mut stops: Vec<(f64, Option<usize>)> = self
            .model
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
                self.advance(x, t, stop)?;
                t = stop;
            }
            if let Some(k) = sample {
                visit(k, stop, x);
            }
        }
        Ok(())
    }
}
