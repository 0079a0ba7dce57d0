//! Polack-model room impulse responses.
//!
//! The synthetic RIR is a unit direct path at index 0, silence up to the
//! mixing time, and a late tail of half-normal noise under an exponential
//! envelope that falls 60 dB after `rt60` seconds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixing time used when none is given, in seconds.
pub const DEFAULT_MIXING_TIME_S: f64 = 0.02;
/// Standard deviation of the late-tail noise.
pub const DEFAULT_SIGMA: f64 = 0.02;
/// Longest RIR generated by default, in seconds.
pub const MAX_DEFAULT_RIR_S: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticParams {
    /// Reverberation time in seconds.
    pub rt60: f64,
    /// Mixing time n_m in samples.
    pub mixing_time: usize,
    pub sigma: f64,
    pub sample_rate: u32,
    /// RIR length N_h in samples.
    pub rir_len: usize,
}

impl AcousticParams {
    /// Defaults: n_m = 20 ms, sigma = 0.02, N_h = ceil(1.5 * rt60 * fs) capped at 1.5 s.
    pub fn new(rt60: f64, sample_rate: u32) -> Self {
        let fs = sample_rate as f64;
        let rir_len = (1.5 * rt60 * fs).ceil().min((MAX_DEFAULT_RIR_S * fs).ceil());
        Self {
            rt60,
            mixing_time: (DEFAULT_MIXING_TIME_S * fs).round() as usize,
            sigma: DEFAULT_SIGMA,
            sample_rate,
            rir_len: if rir_len.is_finite() && rir_len > 0.0 { rir_len as usize } else { 0 },
        }
    }

    pub fn with_mixing_time(mut self, samples: usize) -> Self {
        self.mixing_time = samples;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_rir_len(mut self, samples: usize) -> Self {
        self.rir_len = samples;
        self
    }

    /// Per-sample decay exponent `3 ln(10) / (rt60 * fs)`.
    pub fn decay_rate(&self) -> f64 {
        3.0 * std::f64::consts::LN_10 / (self.rt60 * self.sample_rate as f64)
    }

    /// Deterministic envelope `exp(-decay_rate * n)`.
    pub fn envelope(&self, n: usize) -> f64 {
        (-self.decay_rate() * n as f64).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rt60.is_finite() && self.rt60 > 0.0) {
            return Err(Error::InvalidConfig(format!("rt60 = {} must be > 0", self.rt60)));
        }
        if self.mixing_time < 1 {
            return Err(Error::InvalidConfig("mixing time must be >= 1 sample".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("sigma = {} must be >= 0", self.sigma)));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if self.rir_len <= self.mixing_time {
            return Err(Error::RirShorterThanMixingTime);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Rir {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    /// Unit impulse of length `len`.
    pub fn impulse(len: usize, sample_rate: u32) -> Self {
        let mut samples = vec![0.0; len.max(1)];
        samples[0] = 1.0;
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Sign of the late-tail noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseShape {
    /// `|b(n)|`, the variant used for synthesis.
    #[default]
    HalfNormal,
    /// Signed `b(n)`, the plain Polack model.
    Gaussian,
}

/// Raw noise draw `b(n) ~ N(0, sigma^2)` for `n in 0..rir_len`.
pub fn noise_draw(params: &AcousticParams, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if params.sigma == 0.0 {
        return vec![0.0; params.rir_len];
    }
    let normal = Normal::new(0.0, params.sigma).expect("sigma validated as finite and >= 0");
    (0..params.rir_len).map(|_| normal.sample(&mut rng)).collect()
}

pub fn synth_rir(params: &AcousticParams, seed: u64) -> Result<Rir> {
    synth_rir_with_noise(params, seed, NoiseShape::HalfNormal)
}

pub fn synth_rir_with_noise(params: &AcousticParams, seed: u64, shape: NoiseShape) -> Result<Rir> {
    params.validate()?;
    let noise = noise_draw(params, seed);
    let rate = params.decay_rate();
    let samples = noise
        .iter()
        .enumerate()
        .map(|(n, &b)| {
            if n == 0 {
                1.0
            } else if n <= params.mixing_time {
                0.0
            } else {
                let b = match shape {
                    NoiseShape::HalfNormal => b.abs(),
                    NoiseShape::Gaussian => b,
                };
                b * (-rate * n as f64).exp()
            }
        })
        .collect();
    Ok(Rir::new(samples, params.sample_rate))
}

/// Drops everything before the strongest peak and scales the peak to +1.
pub fn normalize_align(rir: &Rir) -> Result<Rir> {
    let (peak_idx, peak) = rir
        .samples
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best });
    if peak == 0.0 {
        return Err(Error::SilentRir);
    }
    let samples = rir.samples[peak_idx..].iter().map(|x| x / peak).collect();
    Ok(Rir::new(samples, rir.sample_rate))
}

/// Schroeder energy decay curve in dB relative to the total energy.
pub fn energy_decay_curve(samples: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; samples.len()];
    let mut acc = 0.0;
    for (i, x) in samples.iter().enumerate().rev() {
        acc += x * x;
        edc[i] = acc;
    }
    let total = acc;
    edc.iter()
        .map(|&e| if e > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// RT60 from the energy decay curve: a least-squares line over the
/// -5 dB..-25 dB span, extrapolated to 60 dB.
///
/// Samples where the RIR is exactly zero carry no decay information (the
/// curve is flat there) and are left out of the fit.
pub fn schroeder_rt60(rir: &Rir) -> Result<f64> {
    let fs = rir.sample_rate as f64;
    if (rir.len() as f64) < 0.1 * fs {
        return Err(Error::TooShort(format!(
            "{} samples is under 0.1 s at {} Hz",
            rir.len(),
            rir.sample_rate
        )));
    }
    let edc = energy_decay_curve(&rir.samples);
    if edc.first().is_none_or(|d| !d.is_finite()) {
        return Err(Error::SilentRir);
    }
    if !edc.iter().any(|&d| d <= -25.0) {
        return Err(Error::InsufficientDecay);
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&level, &x)) in edc.iter().zip(&rir.samples).enumerate() {
        if !(-25.0..=-5.0).contains(&level) || x == 0.0 {
            continue;
        }
        let t = i as f64 / fs;
        n += 1.0;
        sx += t;
        sy += level;
        sxx += t * t;
        sxy += t * level;
    }
    let denom = n * sxx - sx * sx;
    if n < 2.0 || denom <= 0.0 {
        return Err(Error::InsufficientDecay);
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope >= 0.0 {
        return Err(Error::InsufficientDecay);
    }
    // 3x the 20 dB fall time
    Ok(3.0 * (-20.0 / slope))
}
