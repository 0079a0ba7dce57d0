//! Mono WAV input and output at the fixed processing rate.

use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::CliError;

/// Processing rate for every command.
pub const PROCESSING_RATE: u32 = 16000;

#[derive(Debug, Clone, PartialEq)]
pub struct WavBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl WavBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Average channels instead of rejecting multichannel input.
    pub mixdown: bool,
    /// Resample other rates to the processing rate instead of rejecting them.
    pub resample: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    F32,
    Pcm16,
}

pub fn read_wav(path: &Path, opts: ReadOptions) -> Result<WavBuffer, CliError> {
    let mut reader = WavReader::open(path).map_err(|e| CliError::wav(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::wav(path, e))?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::wav(path, e))?,
        (fmt, bits) => {
            return Err(CliError::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    if channels != 1 && !opts.mixdown {
        return Err(CliError::Multichannel(format!(
            "{}: {channels} channels; pass --mixdown to average them",
            path.display()
        )));
    }
    let samples: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if spec.sample_rate == PROCESSING_RATE {
        return Ok(WavBuffer::new(samples, PROCESSING_RATE));
    }
    if !opts.resample {
        return Err(CliError::UnsupportedSampleRate(spec.sample_rate));
    }
    Ok(WavBuffer::new(
        resample(&samples, spec.sample_rate, PROCESSING_RATE)?,
        PROCESSING_RATE,
    ))
}

pub fn write_wav(path: &Path, buf: &WavBuffer, format: OutputFormat) -> Result<(), CliError> {
    let (bits, sample_format) = match format {
        OutputFormat::F32 => (32, SampleFormat::Float),
        OutputFormat::Pcm16 => (16, SampleFormat::Int),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| CliError::wav(path, e))?;
    for &x in &buf.samples {
        let res = match format {
            OutputFormat::F32 => writer.write_sample(x as f32),
            OutputFormat::Pcm16 => writer.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
        };
        res.map_err(|e| CliError::wav(path, e))?;
    }
    writer.finalize().map_err(|e| CliError::wav(path, e))
}

/// Half-width of the interpolation kernel in samples of the slower rate.
const RESAMPLE_ZEROS: f64 = 24.0;

/// Band-limited resampling with a Blackman-windowed sinc kernel; the output
/// keeps the input duration and time origin.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Result<Vec<f64>, CliError> {
    if from == 0 || to == 0 {
        return Err(CliError::Resample("sample rates must be positive".into()));
    }
    let out_len = (samples.len() as u64 * to as u64).div_ceil(from as u64) as usize;
    let ratio = from as f64 / to as f64;
    // cutoff relative to the input rate, just below the lower Nyquist
    let cutoff = 0.475 * (to as f64 / from as f64).min(1.0);
    let half = (RESAMPLE_ZEROS / (2.0 * cutoff)).ceil();
    let kernel = |d: f64| {
        if d.abs() >= half {
            return 0.0;
        }
        let x = 2.0 * cutoff * d;
        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let p = PI * (d / half + 1.0);
        let window = 0.42 - 0.5 * p.cos() + 0.08 * (2.0 * p).cos();
        2.0 * cutoff * sinc * window
    };
    Ok((0..out_len)
        .map(|m| {
            let centre = m as f64 * ratio;
            let lo = ((centre - half).ceil().max(0.0)) as usize;
            let hi = ((centre + half).floor() as usize).min(samples.len().saturating_sub(1));
            (lo..=hi).map(|n| samples[n] * kernel(centre - n as f64)).sum()
        })
        .collect())
}
