//! Reverberation-matching loss
//!
//! ```text
//! L = sum_{f,t} |Y^ - Y|^2 + lambda * ln((1 + gamma |Y^|) / (1 + gamma |Y|))^2
//! ```
//!
//! reported as a plain sum, and its gradient with respect to the dry STFT
//! estimate through the cross-band convolution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ctf::{adjoint_frames, ctf_convolve, CtfTensor};
use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub lambda: f64,
    pub gamma: f64,
    /// Floor on `|Y^|` in the log-term gradient.
    pub eps: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 1.0,
            eps: 1e-12,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma = {} must be > 0", self.gamma)));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-8) {
            return Err(Error::InvalidConfig(format!("eps = {} must lie in (0, 1e-8]", self.eps)));
        }
        Ok(())
    }

    fn log_ratio(&self, est: Complex64, reference: Complex64) -> f64 {
        ((1.0 + self.gamma * est.norm()) / (1.0 + self.gamma * reference.norm())).ln()
    }

    fn entry_loss(&self, est: Complex64, reference: Complex64) -> f64 {
        let l = self.log_ratio(est, reference);
        (est - reference).norm_sqr() + self.lambda * l * l
    }

    /// Half the real gradient of one entry's loss with respect to `est`,
    /// packed as a complex number.
    fn entry_sensitivity(&self, est: Complex64, reference: Complex64) -> Complex64 {
        let mut d = est - reference;
        if self.lambda > 0.0 {
            let mag = est.norm();
            let l = self.log_ratio(est, reference);
            let w = self.lambda * l * self.gamma / ((1.0 + self.gamma * mag) * mag.max(self.eps));
            d += est * w;
        }
        d
    }
}

fn check_bins(a: &ComplexSpectrogram, b: &ComplexSpectrogram) -> Result<()> {
    if a.n_bins() != b.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "F = {} vs F = {}",
            a.n_bins(),
            b.n_bins()
        )));
    }
    Ok(())
}

/// Loss between `est` and `reference`; the shorter one is zero-padded.
pub fn reverb_match_loss(est: &ComplexSpectrogram, reference: &ComplexSpectrogram, params: &LossParams) -> Result<f64> {
    params.validate()?;
    check_bins(est, reference)?;
    let zero = Complex64::new(0.0, 0.0);
    let n = est.data().len().max(reference.data().len());
    Ok((0..n)
        .map(|i| {
            let a = est.data().get(i).copied().unwrap_or(zero);
            let b = reference.data().get(i).copied().unwrap_or(zero);
            params.entry_loss(a, b)
        })
        .sum())
}

/// Loss at `Y^ = ctf_convolve(dry_est)` and the image `G` with
/// `dL/dRe S^ = 2 Re G`, `dL/dIm S^ = 2 Im G`.
pub fn loss_gradient(
    dry_est: &ComplexSpectrogram,
    reference: &ComplexSpectrogram,
    ctf: &CtfTensor,
    params: &LossParams,
) -> Result<(f64, ComplexSpectrogram)> {
    params.validate()?;
    check_bins(dry_est, reference)?;
    let est = ctf_convolve(dry_est, ctf)?;
    let loss = reverb_match_loss(&est, reference, params)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut sensitivity = est.clone();
    for (i, z) in sensitivity.data_mut().iter_mut().enumerate() {
        let r = reference.data().get(i).copied().unwrap_or(zero);
        *z = params.entry_sensitivity(*z, r);
    }
    let grad = adjoint_frames(&sensitivity, ctf, dry_est.n_frames());
    Ok((loss, grad))
}
