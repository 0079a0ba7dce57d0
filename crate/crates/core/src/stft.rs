//! Two-sided STFT with a Hann analysis window and its canonical dual.
//!
//! Frames advance by `hop` samples. The signal is preceded by
//! `n_fft - hop` implicit zeros so that every input sample is covered by the
//! same number of frames; frame `t` therefore spans input samples
//! `[t*hop - pad, t*hop - pad + n_fft)`. With that framing the overlap-add
//! synthesis reconstructs every sample, including the first ones, which is
//! what makes the cross-band convolution model exact on whole signals.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    n_fft: usize,
    hop: usize,
    sample_rate: u32,
    analysis_window: Vec<f64>,
    synthesis_window: Vec<f64>,
}

impl StftConfig {
    /// Hann analysis window (periodic) with its canonical dual for `hop`.
    pub fn new(n_fft: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        if n_fft < 2 {
            return Err(Error::InvalidConfig(format!("n_fft = {n_fft} must be >= 2")));
        }
        if hop == 0 || hop > n_fft {
            return Err(Error::InvalidConfig(format!(
                "hop = {hop} must lie in [1, n_fft = {n_fft}]"
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        let analysis = hann(n_fft);
        let synthesis = dual_window(&analysis, hop).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "Hann window of length {n_fft} is not invertible with hop {hop}"
            ))
        })?;
        Ok(Self {
            n_fft,
            hop,
            sample_rate,
            analysis_window: analysis,
            synthesis_window: synthesis,
        })
    }

    /// Window length N.
    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Hop size L.
    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Number of frequency bands F (two-sided, equal to `n_fft`).
    pub fn n_bins(&self) -> usize {
        self.n_fft
    }

    /// Implicit leading zeros before the first input sample.
    pub fn pad(&self) -> usize {
        self.n_fft - self.hop
    }

    pub fn analysis_window(&self) -> &[f64] {
        &self.analysis_window
    }

    pub fn synthesis_window(&self) -> &[f64] {
        &self.synthesis_window
    }

    /// Frame count for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        (len + self.pad()).div_ceil(self.hop)
    }

    /// Analysis window, zero outside `[0, N)`.
    pub fn wa(&self, n: isize) -> f64 {
        window_at(&self.analysis_window, n)
    }

    /// Synthesis window, zero outside `[0, N)`.
    pub fn ws(&self, n: isize) -> f64 {
        window_at(&self.synthesis_window, n)
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(512, 256, 16000).expect("default STFT configuration is valid")
    }
}

fn window_at(w: &[f64], n: isize) -> f64 {
    if n < 0 {
        0.0
    } else {
        w.get(n as usize).copied().unwrap_or(0.0)
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// `w_s(n) = w_a(n) / sum_k w_a(n - k*hop)^2`, so that the shifted products
/// `w_s * w_a` sum to one.
fn dual_window(analysis: &[f64], hop: usize) -> Option<Vec<f64>> {
    let n = analysis.len();
    let mut denom = vec![0.0; hop];
    for (i, w) in analysis.iter().enumerate() {
        denom[i % hop] += w * w;
    }
    if denom.iter().any(|&d| d <= 1e-12) {
        return None;
    }
    Some((0..n).map(|i| analysis[i] / denom[i % hop]).collect())
}

/// Complex F x T matrix of STFT coefficients, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    config: Arc<StftConfig>,
}

impl ComplexSpectrogram {
    pub fn zeros(config: Arc<StftConfig>, n_frames: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); config.n_bins() * n_frames],
            n_frames,
            config,
        }
    }

    /// Builds a spectrogram from frame-major data (`data[t * F + f]`).
    pub fn from_data(config: Arc<StftConfig>, data: Vec<Complex64>) -> Result<Self> {
        let bins = config.n_bins();
        if !data.len().is_multiple_of(bins) {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients is not a multiple of F = {bins}",
                data.len()
            )));
        }
        Ok(Self {
            n_frames: data.len() / bins,
            data,
            config,
        })
    }

    pub fn config(&self) -> &Arc<StftConfig> {
        &self.config
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.data[t * self.n_bins() + f]
    }

    pub fn set(&mut self, f: usize, t: usize, value: Complex64) {
        let bins = self.n_bins();
        self.data[t * bins + f] = value;
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let bins = self.n_bins();
        &self.data[t * bins..(t + 1) * bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        let bins = self.n_bins();
        &mut self.data[t * bins..(t + 1) * bins]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Copy truncated or zero-extended to `n_frames` frames.
    pub fn with_frames(&self, n_frames: usize) -> Self {
        let bins = self.n_bins();
        let mut data = vec![Complex64::new(0.0, 0.0); bins * n_frames];
        let keep = n_frames.min(self.n_frames) * bins;
        data[..keep].copy_from_slice(&self.data[..keep]);
        Self {
            data,
            n_frames,
            config: Arc::clone(&self.config),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other> = sum conj(self) * other`, frames beyond the shorter
    /// operand count as zero.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `||self - other|| / ||other||` over the common frame range, with the
    /// excess frames of either operand counted as error.
    pub fn relative_error(&self, other: &Self) -> f64 {
        let n = self.data.len().max(other.data.len());
        let zero = Complex64::new(0.0, 0.0);
        let mut num = 0.0;
        for i in 0..n {
            let a = self.data.get(i).copied().unwrap_or(zero);
            let b = other.data.get(i).copied().unwrap_or(zero);
            num += (a - b).norm_sqr();
        }
        (num / other.norm_sqr()).sqrt()
    }
}

/// Forward STFT with `config.frames_for(len)` frames.
pub fn stft(signal: &[f64], config: &Arc<StftConfig>) -> Result<ComplexSpectrogram> {
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(stft_frames(signal, config, config.frames_for(signal.len())))
}

/// Forward STFT computing exactly `n_frames` frames (samples past the end of
/// `signal` are zero).
pub fn stft_frames(signal: &[f64], config: &Arc<StftConfig>, n_frames: usize) -> ComplexSpectrogram {
    let n = config.n_fft();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut spec = ComplexSpectrogram::zeros(Arc::clone(config), n_frames);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let pad = config.pad() as isize;
    for t in 0..n_frames {
        let start = (t * config.hop()) as isize - pad;
        let frame = spec.frame_mut(t);
        for (i, (slot, w)) in frame.iter_mut().zip(config.analysis_window()).enumerate() {
            let idx = start + i as isize;
            let x = if idx >= 0 {
                signal.get(idx as usize).copied().unwrap_or(0.0)
            } else {
                0.0
            };
            *slot = Complex64::new(x * w, 0.0);
        }
        fft.process_with_scratch(frame, &mut scratch);
    }
    spec
}

/// Complex overlap-add synthesis of every frame, returning `out_len`
/// samples. For a Hermitian-symmetric spectrogram the imaginary part is
/// rounding noise.
pub fn synthesize(spec: &ComplexSpectrogram, out_len: usize) -> Result<Vec<Complex64>> {
    if out_len == 0 {
        return Err(Error::InvalidConfig("output length must be positive".into()));
    }
    let config = spec.config();
    let n = config.n_fft();
    let pad = config.pad();
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let total = (spec.n_frames().saturating_sub(1)) * config.hop() + n;
    let mut acc = vec![Complex64::new(0.0, 0.0); total.max(out_len + pad)];
    let scale = 1.0 / n as f64;
    for t in 0..spec.n_frames() {
        buf.copy_from_slice(spec.frame(t));
        fft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * config.hop();
        for (i, (z, w)) in buf.iter().zip(config.synthesis_window()).enumerate() {
            acc[start + i] += z * (w * scale);
        }
    }
    Ok(acc[pad..pad + out_len].to_vec())
}

/// Inverse STFT by overlap-add with the synthesis window, truncated or
/// zero-padded to `out_len`.
pub fn istft(spec: &ComplexSpectrogram, out_len: usize) -> Result<Vec<f64>> {
    Ok(synthesize(spec, out_len)?.into_iter().map(|z| z.re).collect())
}

/// `W_{f,f'}(m) = (1/F) sum_n w_s(n+m) w_a(n) exp(j 2 pi (f'(n+m) - f n) / F)`
/// by direct summation. Zero for `|m| >= N`.
pub fn cross_window_term(config: &StftConfig, f: usize, f_prime: usize, m: isize) -> Complex64 {
    let n_fft = config.n_fft() as isize;
    if m.abs() >= n_fft {
        return Complex64::new(0.0, 0.0);
    }
    let bins = config.n_bins() as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..n_fft {
        let ws = config.ws(n + m);
        if ws == 0.0 {
            continue;
        }
        let wa = config.wa(n);
        // reduce the phase index modulo F before converting to keep it exact
        let k = (f_prime as i64 * (n + m) as i64 - f as i64 * n as i64).rem_euclid(config.n_bins() as i64);
        let phase = 2.0 * PI * k as f64 / bins;
        acc += Complex64::from_polar(ws * wa, phase);
    }
    acc / bins
}
