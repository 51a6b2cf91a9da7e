use super::integrator::{Integrator, Stats, Tolerances};
use super::liouvillian::{unvectorize, Liouvillian};
use super::propagator::Stepper;
use crate::atom::{AtomModel, LaserField, Manifold, N_LEVELS};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermiticity_error, trace_distance};
use crate::sequence::{DriveProfile, PulseSequence, COOL};
use crate::{Mat8, C64};
use nalgebra::{DMatrix, DVector};

/// 8×8 density matrix in canonical level order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Mat8);

impl DensityMatrix {
    pub fn pure(level: usize) -> Self {
        let mut m = Mat8::zeros();
        m[(level, level)] = C64::new(1.0, 0.0);
        Self(m)
    }

    /// Equal incoherent mixture of the given levels.
    pub fn mixture(levels: &[usize]) -> Self {
        let mut m = Mat8::zeros();
        let w = 1.0 / levels.len() as f64;
        for &l in levels {
            m[(l, l)] += C64::new(w, 0.0);
        }
        Self(m)
    }

    pub fn populations(&self) -> [f64; N_LEVELS] {
        std::array::from_fn(|i| self.0[(i, i)].re)
    }

    /// Summed populations of (S½, P½, D3/2).
    pub fn manifold_populations(&self) -> [f64; 3] {
        let p = self.populations();
        [Manifold::S12, Manifold::P12, Manifold::D32].map(|m| m.indices().map(|i| p[i]).sum())
    }

    /// Checks trace, Hermiticity and positivity against the documented
    /// tolerances (1e-9, 1e-10, −1e-8).
    pub fn validate(&self) -> Result<()> {
        let tr = self.0.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Invalid(format!("density matrix trace is {tr}")));
        }
        let herm = hermiticity_error(&self.0);
        if herm > 1e-10 {
            return Err(Error::Invalid(format!("density matrix not Hermitian ({herm:e})")));
        }
        let min = hermitian_eigenvalues(&self.0)[0];
        if min < -1e-8 {
            return Err(Error::Invalid(format!("density matrix has eigenvalue {min:e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSample {
    pub t: f64,
    pub s: f64,
    pub p: f64,
    pub d: f64,
    /// Detected-channel emission rate, photons/ns.
    pub emission_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationTrace {
    pub samples: Vec<PopulationSample>,
}

impl PopulationTrace {
    /// Sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<&PopulationSample> {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// Trapezoid integral of the emission rate over [a, b].
    pub fn emitted_between(&self, a: f64, b: f64) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[0].t >= a && w[1].t <= b)
            .map(|w| 0.5 * (w[0].emission_rate + w[1].emission_rate) * (w[1].t - w[0].t))
            .sum()
    }
}

/// Result of running the pulse sequence at its cyclic fixed point.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub trace: PopulationTrace,
    /// Cyclic state at the start of the period.
    pub start_state: DensityMatrix,
    pub iterations: usize,
    /// Trace distance between the last two period-final states.
    pub last_change: f64,
    pub stats: Stats,
}

/// Atom + lasers + drive, with the Lindblad generator prebuilt.
#[derive(Debug, Clone)]
pub struct Model {
    pub atom: AtomModel,
    pub lasers: Vec<LaserField>,
    pub sequence: Option<PulseSequence>,
    pub drive: DriveProfile,
    pub generator: Liouvillian,
    pub tolerances: Tolerances,
}

impl Model {
    pub fn new(atom: AtomModel, lasers: Vec<LaserField>, sequence: PulseSequence) -> Result<Self> {
        sequence.validate()?;
        let generator = Liouvillian::new(&atom, &lasers)?;
        Ok(Self {
            drive: sequence.drive(),
            atom,
            lasers,
            sequence: Some(sequence),
            generator,
            tolerances: Tolerances::default(),
        })
    }

    /// A model with time-independent laser scales.
    pub fn constant(atom: AtomModel, lasers: Vec<LaserField>, blue: f64, ir: f64) -> Result<Self> {
        let generator = Liouvillian::new(&atom, &lasers)?;
        Ok(Self {
            drive: DriveProfile::constant(blue, ir),
            atom,
            lasers,
            sequence: None,
            generator,
            tolerances: Tolerances::default(),
        })
    }

    pub fn sequence(&self) -> Result<&PulseSequence> {
        self.sequence
            .as_ref()
            .ok_or_else(|| Error::Invalid("model has no pulse sequence".into()))
    }

    pub fn integrator(&self) -> Integrator<'_> {
        Integrator::new(&self.generator, &self.drive, self.tolerances)
    }

    pub fn detected_rate(&self) -> f64 {
        self.generator.detected().rate
    }

    fn sample(&self, t: f64, x: &Mat8) -> PopulationSample {
        let rho = DensityMatrix(*x);
        let [s, p, d] = rho.manifold_populations();
        let det = self.generator.detected();
        PopulationSample {
            t,
            s,
            p,
            d,
            emission_rate: det.rate * x[(det.upper, det.upper)].re,
        }
    }

    /// Integrate the master equation from `t0` to `t1`, sampling every `dt`.
    pub fn evolve_master(
        &self,
        rho0: &DensityMatrix,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<(PopulationTrace, DensityMatrix)> {
        let (trace, rho, _) = self.evolve_with_stats(rho0, t0, t1, dt)?;
        Ok((trace, rho))
    }

    fn evolve_with_stats(
        &self,
        rho0: &DensityMatrix,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<(PopulationTrace, DensityMatrix, Stats)> {
        if !(t1 > t0) || !(dt > 0.0) {
            return Err(Error::Invalid(format!(
                "evolve_master needs t0 < t1 and dt > 0 (got {t0}, {t1}, {dt})"
            )));
        }
        let n = ((t1 - t0) / dt).floor() as usize;
        let mut times: Vec<f64> = (1..=n).map(|k| t0 + k as f64 * dt).collect();
        if times.last().map_or(true, |&t| t1 - t > 1e-9 * dt) {
            times.push(t1);
        }
        let mut samples = Vec::with_capacity(times.len() + 1);
        samples.push(self.sample(t0, &rho0.0));
        let mut x = rho0.0;
        let mut stepper = Stepper::new(self);
        stepper.run(&mut x, t0, t1, &times, |_, t, x| samples.push(self.sample(t, x)))?;
        Ok((PopulationTrace { samples }, DensityMatrix(x), stepper.stats()))
    }

    /// Full density matrices at the requested ascending times (all ≥ t0).
    pub fn states_at(&self, rho0: &DensityMatrix, t0: f64, times: &[f64]) -> Result<Vec<Mat8>> {
        let mut out = vec![Mat8::zeros(); times.len()];
        let mut x = rho0.0;
        let mut stepper = Stepper::new(self);
        let mut start = 0;
        while start < times.len() && times[start] <= t0 {
            out[start] = rho0.0;
            start += 1;
        }
        if start < times.len() {
            let end = times[times.len() - 1];
            stepper.run(&mut x, t0, end, &times[start..], |k, _, x| out[start + k] = *x)?;
        }
        Ok(out)
    }

    /// Basis of the null space of the constant-drive generator, as matrices.
    pub fn null_space(&self, blue: f64, ir: f64) -> Vec<Mat8> {
        let l = self.generator.superoperator(blue, ir);
        let svd = l.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let smax = svd.singular_values.max();
        let tol = 1e-9 * smax.max(1e-300);
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s <= tol)
            .map(|(k, _)| {
                let row: DVector<C64> = v_t.row(k).adjoint();
                unvectorize(&row)
            })
            .collect()
    }

    /// Stationary state of the generator with constant laser scales.
    pub fn steady_state(&self, blue: f64, ir: f64) -> Result<DensityMatrix> {
        let dim = self.null_space(blue, ir).len();
        if dim != 1 {
            return Err(Error::DegenerateNullSpace { dimension: dim });
        }
        let n = N_LEVELS;
        let mut a: DMatrix<C64> = self.generator.superoperator(blue, ir);
        // replace the first equation by the trace condition
        for col in 0..n * n {
            a[(0, col)] = if col / n == col % n { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        }
        let mut rhs = DVector::zeros(n * n);
        rhs[0] = C64::new(1.0, 0.0);
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or(Error::DegenerateNullSpace { dimension: 0 })?;
        let m = unvectorize(&sol);
        let m = (m + m.adjoint()) * C64::new(0.5, 0.0);
        Ok(DensityMatrix(m))
    }

    /// Run the sequence period after period until it repeats itself
    /// (successive period-final states within 1e-8 in trace distance),
    /// sampling the final period every `dt` on the grid 0, dt, ..., period.
    ///
    /// Iteration starts at the end of the cooling phase from the cooling
    /// steady state, since cooling is designed to forget the initial state.
    pub fn simulate_sequence(&self, dt: f64) -> Result<SequenceRun> {
        let seq = self.sequence()?;
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("sample step must be positive, got {dt}")));
        }
        let period = seq.repetition_period;
        let cool = seq.phases[COOL];
        let origin = seq.phase_end(COOL);
        let mut grid: Vec<f64> = (0..)
            .map(|k| k as f64 * dt)
            .take_while(|&t| t < period - 1e-9 * dt)
            .collect();
        grid.push(period);
        // times on [origin, origin + period] that map back onto the grid
        let mut order: Vec<(f64, usize)> = grid
            .iter()
            .enumerate()
            .map(|(k, &t)| (if t > origin { t } else { t + period }, k))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let times: Vec<f64> = order.iter().map(|o| o.0).collect();

        let mut rho = self
            .steady_state(cool.blue_scale, cool.ir_scale)
            .unwrap_or_else(|_| DensityMatrix::mixture(&[0, 1]));
        let mut last_change = f64::INFINITY;
        let mut stepper = Stepper::new(self);
        // iterate unsampled, then sample one period from the fixed point
        for iteration in 1..=100 {
            let mut x = rho.0;
            stepper.run(&mut x, origin, origin + period, &[], |_, _, _| {})?;
            last_change = trace_distance(&rho.0, &x);
            rho = DensityMatrix(x);
            if last_change < 1e-8 {
                let mut samples = vec![self.sample(0.0, &rho.0); grid.len()];
                let mut start_state = rho;
                let mut x = rho.0;
                stepper.run(&mut x, origin, origin + period, &times, |i, _, x| {
                    let k = order[i].1;
                    samples[k] = self.sample(grid[k], x);
                    if k + 1 == grid.len() {
                        start_state = DensityMatrix(*x);
                    }
                })?;
                // the grid point at the period boundary doubles as t = 0
                samples[0] = self.sample(0.0, &start_state.0);
                return Ok(SequenceRun {
                    trace: PopulationTrace { samples },
                    start_state,
                    iterations: iteration,
                    last_change,
                    stats: stepper.stats(),
                });
            }
        }
        Err(Error::NoFixedPoint {
            iterations: 100,
            last_change,
        })
    }
}
