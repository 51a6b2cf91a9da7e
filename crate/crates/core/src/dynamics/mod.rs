//! Master-equation, regression-theorem and quantum-jump dynamics.

pub mod integrator;
pub mod jumps;
pub mod liouvillian;
pub mod master;
mod propagator;
pub mod regression;

pub use integrator::{Integrator, Stats, Tolerances};
pub use jumps::{EmissionEvent, JumpSimulator, PopulationAverage, TrajectoryOutput};
pub use liouvillian::Liouvillian;
pub use master::{DensityMatrix, Model, PopulationSample, PopulationTrace, SequenceRun};
pub use regression::{CorrelationGrid, TwoTimeCorrelation};
