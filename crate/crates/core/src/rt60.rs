//! Blind RT60 estimation from reverberant audio.
//!
//! The power spectrogram is pooled into subbands between 300 Hz and 4 kHz.
//! In each subband, maximal runs of frames whose level keeps falling (up to
//! a small ripple) are treated as free decays. Each run gets a
//! least-squares slope in dB/s, which maps to a region RT60 of
//! `-60 / slope`; the raw estimate is the median over all regions. An
//! affine calibration fitted on labelled pairs maps raw to calibrated
//! values.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{stft, StftConfig};

/// Lower clamp of calibrated estimates, seconds.
pub const MIN_RT60: f64 = 0.05;
/// Upper clamp of calibrated estimates, seconds.
pub const MAX_RT60: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindConfig {
    pub min_region_frames: usize,
    /// Rise above the running minimum tolerated inside a decay, dB.
    pub ripple_db: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// STFT bins pooled into one subband.
    pub bins_per_band: usize,
    /// A region must fall by at least this much overall, dB.
    pub min_drop_db: f64,
    /// Frames more than this far below the subband maximum are ignored, dB.
    pub dynamic_range_db: f64,
}

impl Default for BlindConfig {
    fn default() -> Self {
        Self {
            min_region_frames: 8,
            ripple_db: 1.0,
            band_low_hz: 300.0,
            band_high_hz: 4000.0,
            bins_per_band: 12,
            min_drop_db: 10.0,
            dynamic_range_db: 50.0,
        }
    }
}

/// A detected free-decay run in one subband.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRegion {
    /// First STFT bin of the subband.
    pub band: usize,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub slope_db_per_s: f64,
}

impl DecayRegion {
    pub fn rt60(&self) -> f64 {
        -60.0 / self.slope_db_per_s
    }
}

/// Affine map `true = slope * raw + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub slope: f64,
    pub intercept: f64,
    pub n_pairs: usize,
}

impl Calibration {
    pub fn identity() -> Self {
        Self {
            slope: 1.0,
            intercept: 0.0,
            n_pairs: 0,
        }
    }

    /// Calibrated value, clamped to `[MIN_RT60, MAX_RT60]`.
    pub fn apply(&self, raw: f64) -> f64 {
        (self.slope * raw + self.intercept).clamp(MIN_RT60, MAX_RT60)
    }
}

/// Subband levels in dB as `(first bin, levels[frame])`.
fn subband_levels(signal: &[f64], config: &Arc<StftConfig>, blind: &BlindConfig) -> Result<Vec<(usize, Vec<f64>)>> {
    let spec = stft(signal, config)?;
    let bin_hz = config.sample_rate() as f64 / config.n_bins() as f64;
    let lo = (blind.band_low_hz / bin_hz).ceil() as usize;
    let hi = ((blind.band_high_hz / bin_hz).floor() as usize).min(config.n_bins() / 2);
    let width = blind.bins_per_band.max(1);
    let mut bands = Vec::new();
    let mut start = lo;
    while start + width <= hi + 1 {
        let power: Vec<f64> = (0..spec.n_frames())
            .map(|t| spec.frame(t)[start..start + width].iter().map(|z| z.norm_sqr()).sum())
            .collect();
        bands.push((start, power));
        start += width;
    }
    let peak = bands.iter().flat_map(|b| &b.1).fold(0.0f64, |m, &p| m.max(p));
    // relative floor keeps the levels invariant to input gain
    let floor = peak * 1e-30 + f64::MIN_POSITIVE;
    Ok(bands
        .into_iter()
        .map(|(bin, b)| (bin, b.into_iter().map(|p| 10.0 * (p + floor).log10()).collect()))
        .collect())
}

fn fit_slope(levels: &[f64], frame_s: f64) -> f64 {
    let n = levels.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &y) in levels.iter().enumerate() {
        let x = i as f64 * frame_s;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// All free-decay regions of `signal`.
pub fn decay_regions(signal: &[f64], config: &Arc<StftConfig>, blind: &BlindConfig) -> Result<Vec<DecayRegion>> {
    let fs = config.sample_rate() as f64;
    if (signal.len() as f64) < fs {
        return Err(Error::TooShort(format!(
            "{} samples is under 1 s at {} Hz",
            signal.len(),
            config.sample_rate()
        )));
    }
    let levels = subband_levels(signal, config, blind)?;
    let frame_s = config.hop() as f64 / fs;
    let min_len = blind.min_region_frames.max(2);

    let regions = levels
        .par_iter()
        .flat_map_iter(|(band, lv)| {
            let band = *band;
            let top = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let floor = top - blind.dynamic_range_db;
            let mut found = Vec::new();
            let mut t = 0;
            while t < lv.len() {
                if lv[t] < floor {
                    t += 1;
                    continue;
                }
                let start = t;
                let mut running_min = lv[t];
                let mut end = t + 1;
                while end < lv.len() && lv[end] >= floor && lv[end] < running_min + blind.ripple_db {
                    running_min = running_min.min(lv[end]);
                    end += 1;
                }
                if end - start >= min_len && lv[start] - running_min >= blind.min_drop_db {
                    let slope = fit_slope(&lv[start..end], frame_s);
                    if slope < 0.0 {
                        found.push(DecayRegion {
                            band,
                            start_frame: start,
                            end_frame: end,
                            slope_db_per_s: slope,
                        });
                    }
                }
                t = end;
            }
            found
        })
        .collect();
    Ok(regions)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Uncalibrated estimate with the default detector settings.
pub fn estimate_rt60_raw(signal: &[f64], config: &Arc<StftConfig>) -> Result<f64> {
    estimate_rt60_raw_with(signal, config, &BlindConfig::default())
}

pub fn estimate_rt60_raw_with(signal: &[f64], config: &Arc<StftConfig>, blind: &BlindConfig) -> Result<f64> {
    let regions = decay_regions(signal, config, blind)?;
    if regions.is_empty() {
        return Err(Error::NoFreeDecay);
    }
    let mut rts: Vec<f64> = regions.iter().map(DecayRegion::rt60).collect();
    Ok(median(&mut rts))
}

pub fn estimate_rt60(signal: &[f64], config: &Arc<StftConfig>, cal: &Calibration) -> Result<f64> {
    Ok(cal.apply(estimate_rt60_raw(signal, config)?))
}

/// Least-squares affine fit of true RT60 on raw estimates; pairs whose raw
/// estimate fails are skipped.
pub fn calibrate(pairs: &[(Vec<f64>, f64)], config: &Arc<StftConfig>) -> Result<Calibration> {
    let raws: Vec<(f64, f64)> = pairs
        .par_iter()
        .filter_map(|(signal, truth)| estimate_rt60_raw(signal, config).ok().map(|r| (r, *truth)))
        .collect();
    fit_calibration(&raws)
}

/// Fit from precomputed `(raw, true)` pairs.
pub fn fit_calibration(raws: &[(f64, f64)]) -> Result<Calibration> {
    if raws.is_empty() {
        return Err(Error::NoFreeDecay);
    }
    if raws.len() < 2 {
        return Err(Error::RankDeficientCalibration);
    }
    let n = raws.len() as f64;
    let mx = raws.iter().map(|p| p.0).sum::<f64>() / n;
    let my = raws.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = raws.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = raws.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-12 * mx.abs().max(1.0).powi(2) * n {
        return Err(Error::RankDeficientCalibration);
    }
    let slope = sxy / sxx;
    if slope <= 0.0 {
        return Err(Error::InvalidConfig(format!("calibration slope {slope} is not positive")));
    }
    Ok(Calibration {
        slope,
        intercept: my - slope * mx,
        n_pairs: raws.len(),
    })
}
