//! Cross-band convolutive transfer function (CTF).
//!
//! A time-domain RIR `h` acts on STFT coefficients as
//!
//! ```text
//! Y[f, t] = sum_{f'} sum_{t'} H[f, f', t'] S[f', t - t']
//! H[f, f', t'] = sum_{m=-N+1}^{N-1} h(t' L - m) W_{f,f'}(m)
//! ```
//!
//! Only the bands `f' = f - F' ..= f + F'` (modulo F) are stored. With more
//! than one frame per window (`N > L`) the synthesis window of frame `t + 1`
//! overlaps analysis frame `t`, so `H` has `floor((N - 1) / L)` look-ahead
//! lags (`t' < 0`) besides the `T_h = ceil((N_h + N - 1) / L)` causal lags.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rir::Rir;
use crate::stft::{ComplexSpectrogram, StftConfig};

/// Band radius used throughout unless configured otherwise.
pub const DEFAULT_BAND_RADIUS: usize = 4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Banded tensor `H[f, f', t']`, laid out lag-major then by output band `f`,
/// with the stored band offsets innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfTensor {
    data: Vec<Complex64>,
    band_radius: usize,
    band_width: usize,
    n_ctf_frames: usize,
    lookahead: usize,
    config: Arc<StftConfig>,
}

impl CtfTensor {
    /// F'.
    pub fn band_radius(&self) -> usize {
        self.band_radius
    }

    /// Number of stored band offsets: `2 F' + 1`, or F for the full band.
    pub fn band_width(&self) -> usize {
        self.band_width
    }

    /// Causal lag count T_h.
    pub fn n_ctf_frames(&self) -> usize {
        self.n_ctf_frames
    }

    /// Number of look-ahead lags (`t' = -1, -2, ...`).
    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn config(&self) -> &Arc<StftConfig> {
        &self.config
    }

    /// Entry `(f, k, t')` holding `H[f, (f + k - F') mod F, t']`.
    pub fn entry(&self, f: usize, k: usize, lag: isize) -> Complex64 {
        let li = (lag + self.lookahead as isize) as usize;
        self.data[(li * self.config.n_bins() + f) * self.band_width + k]
    }

    /// `H[f, f', t']`, zero when `f'` lies outside the band or `t'` outside
    /// the stored lags.
    pub fn get(&self, f: usize, f_prime: usize, lag: isize) -> Complex64 {
        let bins = self.config.n_bins() as isize;
        if lag < -(self.lookahead as isize) || lag >= self.n_ctf_frames as isize {
            return ZERO;
        }
        let k = (f_prime as isize - f as isize + self.band_radius as isize).rem_euclid(bins) as usize;
        if k >= self.band_width {
            return ZERO;
        }
        self.entry(f, k, lag)
    }

    fn lag_count(&self) -> usize {
        self.lookahead + self.n_ctf_frames
    }

    fn row(&self, lag_index: usize, f: usize) -> &[Complex64] {
        let start = (lag_index * self.config.n_bins() + f) * self.band_width;
        &self.data[start..start + self.band_width]
    }
}

/// Precomputed window ambiguity terms for one STFT configuration and band
/// radius, reusable across RIRs.
///
/// Writing `W_{f,f+k}(m) = (1/F) e^{j 2 pi f m / F} G_k(-m)` with
/// `G_k(d) = sum_n w_a(n + d) w_s(n) e^{j 2 pi k n / F}` turns each
/// `(t', k)` slice of the tensor into a single length-F FFT.
pub struct CtfPlan {
    config: Arc<StftConfig>,
    band_radius: usize,
    band_width: usize,
    /// `g[k][d + N - 1]` for the stored offsets `k`.
    g: Vec<Vec<Complex64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl CtfPlan {
    pub fn new(config: &Arc<StftConfig>, band_radius: usize) -> Result<Self> {
        let bins = config.n_bins();
        if band_radius > bins / 2 {
            return Err(Error::BandRadius {
                radius: band_radius,
                max: bins / 2,
            });
        }
        let band_width = (2 * band_radius + 1).min(bins);
        let n = config.n_fft();
        let mut planner = FftPlanner::<f64>::new();
        let inverse = planner.plan_fft_inverse(n);
        let fft = planner.plan_fft_forward(n);

        let mut g = vec![vec![ZERO; 2 * n - 1]; band_width];
        let mut buf = vec![ZERO; n];
        for d in -(n as isize - 1)..n as isize {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(config.wa(i as isize + d) * config.ws(i as isize), 0.0);
            }
            inverse.process(&mut buf);
            for (b, gk) in g.iter_mut().enumerate() {
                let offset = b as isize - band_radius as isize;
                gk[(d + n as isize - 1) as usize] = buf[offset.rem_euclid(bins as isize) as usize];
            }
        }
        Ok(Self {
            config: Arc::clone(config),
            band_radius,
            band_width,
            g,
            fft,
        })
    }

    pub fn config(&self) -> &Arc<StftConfig> {
        &self.config
    }

    pub fn band_radius(&self) -> usize {
        self.band_radius
    }

    /// Builds the banded tensor of `rir`.
    pub fn build(&self, rir: &Rir) -> Result<CtfTensor> {
        let config = &self.config;
        if rir.sample_rate != config.sample_rate() {
            return Err(Error::ConfigMismatch(format!(
                "RIR at {} Hz, STFT at {} Hz",
                rir.sample_rate,
                config.sample_rate()
            )));
        }
        if rir.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = config.n_fft() as isize;
        let hop = config.hop() as isize;
        let bins = config.n_bins();
        let h = &rir.samples;
        let n_ctf_frames = (h.len() + config.n_fft() - 1).div_ceil(config.hop());
        let lookahead = ((n - 1) / hop) as usize;
        let lag_count = lookahead + n_ctf_frames;
        let width = self.band_width;
        let scale = 1.0 / bins as f64;

        let mut data = vec![ZERO; lag_count * bins * width];
        data.par_chunks_mut(bins * width)
            .enumerate()
            .for_each(|(li, slab)| {
                let lag = li as isize - lookahead as isize;
                let mut u = vec![ZERO; bins];
                let mut scratch = vec![ZERO; self.fft.get_inplace_scratch_len()];
                // d such that 0 <= lag*L + d < N_h, intersected with |d| < N
                let d_lo = (-(n - 1)).max(-lag * hop);
                let d_hi = (n - 1).min(h.len() as isize - 1 - lag * hop);
                for (b, gk) in self.g.iter().enumerate() {
                    u.fill(ZERO);
                    if d_lo <= d_hi {
                        for d in d_lo..=d_hi {
                            let x = h[(lag * hop + d) as usize];
                            if x != 0.0 {
                                u[d.rem_euclid(bins as isize) as usize] += gk[(d + n - 1) as usize] * x;
                            }
                        }
                    }
                    self.fft.process_with_scratch(&mut u, &mut scratch);
                    for (f, z) in u.iter().enumerate() {
                        slab[f * width + b] = z * scale;
                    }
                }
            });
        Ok(CtfTensor {
            data,
            band_radius: self.band_radius,
            band_width: width,
            n_ctf_frames,
            lookahead,
            config: Arc::clone(config),
        })
    }
}

/// Tensor of `rir` restricted to `band_radius` bands on each side.
pub fn compute_ctf(rir: &Rir, config: &Arc<StftConfig>, band_radius: usize) -> Result<CtfTensor> {
    CtfPlan::new(config, band_radius)?.build(rir)
}

fn check_config(spec: &ComplexSpectrogram, ctf: &CtfTensor) -> Result<()> {
    if Arc::ptr_eq(spec.config(), ctf.config()) || **spec.config() == **ctf.config() {
        Ok(())
    } else {
        Err(Error::ConfigMismatch(format!(
            "spectrogram (N = {}, L = {}) vs CTF (N = {}, L = {})",
            spec.config().n_fft(),
            spec.config().hop(),
            ctf.config().n_fft(),
            ctf.config().hop()
        )))
    }
}

/// Frames of `spec` with `band_radius` bins of circular wrap on the left and
/// `width - 1 - band_radius` on the right, so band offsets index linearly.
fn wrapped_frames(spec: &ComplexSpectrogram, ctf: &CtfTensor) -> Vec<Complex64> {
    let bins = spec.n_bins();
    let ext = bins + ctf.band_width - 1;
    let r = ctf.band_radius;
    let mut out = vec![ZERO; ext * spec.n_frames()];
    for (t, dst) in out.chunks_mut(ext).enumerate() {
        let src = spec.frame(t);
        for (i, slot) in dst.iter_mut().enumerate() {
            *slot = src[(i + bins - r % bins) % bins];
        }
    }
    out
}

/// Banded cross-band convolution; the output has `T_s + T_h - 1` frames.
pub fn ctf_convolve(spec: &ComplexSpectrogram, ctf: &CtfTensor) -> Result<ComplexSpectrogram> {
    check_config(spec, ctf)?;
    let bins = spec.n_bins();
    let width = ctf.band_width;
    let ext = bins + width - 1;
    let t_s = spec.n_frames() as isize;
    let t_y = spec.n_frames() + ctf.n_ctf_frames - 1;
    let src = wrapped_frames(spec, ctf);
    let lookahead = ctf.lookahead as isize;

    let mut out = ComplexSpectrogram::zeros(Arc::clone(spec.config()), t_y);
    out.data_mut()
        .par_chunks_mut(bins)
        .enumerate()
        .for_each(|(t, dst)| {
            for li in 0..ctf.lag_count() {
                let tau = t as isize - (li as isize - lookahead);
                if tau < 0 || tau >= t_s {
                    continue;
                }
                let frame = &src[tau as usize * ext..(tau as usize + 1) * ext];
                for (f, y) in dst.iter_mut().enumerate() {
                    let row = ctf.row(li, f);
                    let s = &frame[f..f + width];
                    let mut acc = ZERO;
                    for (hk, sk) in row.iter().zip(s) {
                        acc += hk * sk;
                    }
                    *y += acc;
                }
            }
        });
    Ok(out)
}

/// Adjoint of [`ctf_convolve`] under `<A, B> = sum conj(A) B`. `residual`
/// must have `T_y >= T_h` frames; the result has `T_y - T_h + 1` frames.
pub fn ctf_adjoint(residual: &ComplexSpectrogram, ctf: &CtfTensor) -> Result<ComplexSpectrogram> {
    check_config(residual, ctf)?;
    if residual.n_frames() < ctf.n_ctf_frames {
        return Err(Error::ShapeMismatch(format!(
            "residual has {} frames, CTF needs at least T_h = {}",
            residual.n_frames(),
            ctf.n_ctf_frames
        )));
    }
    let t_s = residual.n_frames() + 1 - ctf.n_ctf_frames;
    Ok(adjoint_frames(residual, ctf, t_s))
}

pub(crate) fn adjoint_frames(residual: &ComplexSpectrogram, ctf: &CtfTensor, t_s: usize) -> ComplexSpectrogram {
    let bins = residual.n_bins();
    let width = ctf.band_width;
    let ext = bins + width - 1;
    let r = ctf.band_radius % bins;
    let t_y = residual.n_frames() as isize;
    let lookahead = ctf.lookahead as isize;

    let mut out = ComplexSpectrogram::zeros(Arc::clone(residual.config()), t_s);
    out.data_mut()
        .par_chunks_mut(bins)
        .enumerate()
        .for_each(|(tau, dst)| {
            let mut acc = vec![ZERO; ext];
            for li in 0..ctf.lag_count() {
                let t = tau as isize + (li as isize - lookahead);
                if t < 0 || t >= t_y {
                    continue;
                }
                let res = residual.frame(t as usize);
                for (f, y) in res.iter().enumerate() {
                    if *y == ZERO {
                        continue;
                    }
                    let row = ctf.row(li, f);
                    for (a, hk) in acc[f..f + width].iter_mut().zip(row) {
                        *a += hk.conj() * y;
                    }
                }
            }
            for (i, a) in acc.iter().enumerate() {
                dst[(i + bins - r) % bins] += a;
            }
        });
    out
}

/// Full linear convolution `s * h` (length `len(s) + N_h - 1`) via FFT.
pub fn time_convolve(signal: &[f64], rir: &Rir) -> Result<Vec<f64>> {
    if signal.is_empty() || rir.is_empty() {
        return Err(Error::EmptyInput);
    }
    let out_len = signal.len() + rir.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    a.resize(size, ZERO);
    let mut b: Vec<Complex64> = rir.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    b.resize(size, ZERO);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    Ok(a[..out_len].iter().map(|z| z.re * scale).collect())
}
