//! Objective quality measures.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::{stft_frames, StftConfig};

/// SI-SDR values are clamped to +/- this many dB.
pub const SISDR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sisdr_db: f64,
    pub lsd_db: f64,
}

/// Scale-invariant signal-to-distortion ratio in dB. Inputs are truncated
/// to the shorter length.
pub fn sisdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    let n = reference.len().min(estimate.len());
    let (r, e) = (&reference[..n], &estimate[..n]);
    let ref_energy: f64 = r.iter().map(|x| x * x).sum();
    if n == 0 || ref_energy == 0.0 {
        return Err(Error::SilentReference);
    }
    let alpha = r.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / ref_energy;
    let target = alpha * alpha * ref_energy;
    let residual: f64 = r.iter().zip(e).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    let db = if target == 0.0 {
        -SISDR_CAP_DB
    } else if residual == 0.0 {
        SISDR_CAP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SISDR_CAP_DB, SISDR_CAP_DB))
}

/// RMS over frames of the per-frame RMS difference of
/// `20 log10(|STFT| + 1e-8)` over the one-sided bins.
pub fn log_spectral_distance(reference: &[f64], estimate: &[f64], config: &Arc<StftConfig>) -> Result<f64> {
    if reference.is_empty() || estimate.is_empty() {
        return Err(Error::EmptyInput);
    }
    let diff = reference.len().abs_diff(estimate.len());
    if diff > config.hop() {
        return Err(Error::ShapeMismatch(format!(
            "lengths {} and {} differ by more than one frame",
            reference.len(),
            estimate.len()
        )));
    }
    let n = reference.len().min(estimate.len());
    let frames = config.frames_for(n);
    let a = stft_frames(&reference[..n], config, frames);
    let b = stft_frames(&estimate[..n], config, frames);
    let half = config.n_bins() / 2 + 1;
    let mut acc = 0.0;
    for t in 0..frames {
        let per_frame: f64 = a.frame(t)[..half]
            .iter()
            .zip(&b.frame(t)[..half])
            .map(|(x, y)| (20.0 * (x.norm() + 1e-8).log10() - 20.0 * (y.norm() + 1e-8).log10()).powi(2))
            .sum::<f64>()
            / half as f64;
        acc += per_frame;
    }
    Ok((acc / frames as f64).sqrt())
}

pub fn evaluate(reference: &[f64], estimate: &[f64], config: &Arc<StftConfig>) -> Result<MetricReport> {
    Ok(MetricReport {
        sisdr_db: sisdr(reference, estimate)?,
        lsd_db: log_spectral_distance(reference, estimate, config)?,
    })
}
