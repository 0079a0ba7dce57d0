//! Shared benchmark inputs.

use std::sync::Arc;

use reverb_match::signals::harmonic_utterance;
use reverb_match::{normalize_align, stft, synth_rir, time_convolve, AcousticParams, ComplexSpectrogram, Rir, StftConfig};

pub struct Fixture {
    pub config: Arc<StftConfig>,
    pub rir: Rir,
    pub reverberant: Vec<f64>,
    pub spec: ComplexSpectrogram,
}

/// A reverberant utterance of `duration_s` seconds at the given RT60.
pub fn fixture(duration_s: f64, rt60: f64) -> Fixture {
    let config = Arc::new(StftConfig::default());
    let rir = normalize_align(&synth_rir(&AcousticParams::new(rt60, 16000), 1).unwrap()).unwrap();
    let dry = harmonic_utterance(duration_s, 16000, 1);
    let mut reverberant = time_convolve(&dry, &rir).unwrap();
    reverberant.truncate(dry.len());
    let spec = stft(&reverberant, &config).unwrap();
    Fixture {
        config,
        rir,
        reverberant,
        spec,
    }
}
