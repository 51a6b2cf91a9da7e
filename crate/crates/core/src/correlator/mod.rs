//! Histograms, fits and two-photon models built from click streams and
//! regression output.

pub mod budget;
pub mod cross;
pub mod fit;
pub mod g1;
pub mod hom;
pub mod wavepacket;

pub use budget::{two_run_contrast, Arm, Budget, CoincidenceModel, DarkModel};
pub use cross::{cross_correlate, CorrelationHistogram, HistogramSpec, Normalization};
pub use fit::{fit_exponential_tail, linearity_scan, ExpFit, FitWindow, LinearityFit, Weighting};
pub use g1::{g1_summary, G1Summary};
pub use hom::{hom_coincidence_model, HomModel};
pub use wavepacket::{arrival_histogram, WavepacketEstimate};
