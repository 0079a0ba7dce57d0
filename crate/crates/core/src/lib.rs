//! Hybrid reverberation modelling for unsupervised speech dereverberation.
//!
//! The crate is organised bottom-up:
//!
//! * [`stft`]: two-sided STFT analysis/synthesis with a Hann analysis window
//!   and its canonical dual, plus the window cross-term `W_{f,f'}(m)`.
//! * [`rir`]: Polack-model impulse responses, alignment and Schroeder
//!   decay measurement.
//! * [`ctf`]: the cross-band convolutive transfer function tensor, its
//!   banded convolution and exact adjoint, and a time-domain reference
//!   convolution.
//! * [`loss`]: the reverberation-matching loss and its gradient with respect
//!   to the dry STFT.
//! * [`rt60`]: blind reverberation-time estimation from reverberant audio.
//! * [`solver`]: gradient-descent dereverberation and synthetic pair
//!   generation.
//! * [`metrics`]: SI-SDR and log-spectral distance.

pub mod ctf;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod rir;
pub mod rt60;
pub mod signals;
pub mod solver;
pub mod stft;

pub use ctf::{compute_ctf, ctf_adjoint, ctf_convolve, time_convolve, CtfPlan, CtfTensor};
pub use error::{Error, Result};
pub use loss::{loss_gradient, reverb_match_loss, LossParams};
pub use metrics::{log_spectral_distance, sisdr, MetricReport};
pub use num_complex::Complex64;
pub use rir::{normalize_align, schroeder_rt60, synth_rir, AcousticParams, NoiseShape, Rir};
pub use rt60::{calibrate, estimate_rt60, estimate_rt60_raw, BlindConfig, Calibration};
pub use solver::{dereverb, make_pairs, PairItem, Rt60Source, SolveReport, SolverConfig};
pub use stft::{cross_window_term, istft, stft, ComplexSpectrogram, StftConfig};
