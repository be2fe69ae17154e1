//! Fitting, peak finding and the experiment pipelines built on them.

pub mod ensemble;
pub mod fit;
pub mod ingest;
pub mod peaks;
pub mod spectroscopy;
pub mod sweep;

pub use ensemble::{appendix_a1_curves, ensemble_average_t2, ensemble_echo_t2, A1Point, AveragingScheme, EnsembleConfig, EnsembleResult};
pub use fit::{fit_decay_envelope, fit_decaying_sinusoid, FitResult, ParamErrors};
pub use ingest::{ingest_shot_records, read_shot_records};
pub use peaks::{find_peaks, find_peaks_with, Peak, PeakOptions};
pub use spectroscopy::{choose_tau_p, optimize_tau_p, spectroscopy_map, SpectroscopyMap, TauChoice};
pub use sweep::{fit_averages, fit_envelope_averages, slope_ci95, sweep_dispersion, Estimate, SlopeInterval, SweepConfig, SweepMode, SweepResult};
