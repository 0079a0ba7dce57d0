//! Dereverberation by direct optimization of the dry STFT.
//!
//! Starting from the reverberant STFT, every step draws a new RIR at the
//! chosen RT60, maps it to a CTF tensor and moves the estimate against the
//! gradient of the reverberation-matching loss.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctf::{ctf_convolve, time_convolve, CtfPlan, DEFAULT_BAND_RADIUS};
use crate::error::{Error, Result};
use crate::loss::{loss_gradient, reverb_match_loss, LossParams};
use crate::rir::{normalize_align, schroeder_rt60, synth_rir, AcousticParams, Rir};
use crate::rt60::{estimate_rt60, Calibration};
use crate::stft::{istft, stft, ComplexSpectrogram, StftConfig};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rt60Source {
    Given(f64),
    /// RT60 measured on a known RIR by Schroeder integration.
    Oracle(Rir),
    Blind(Calibration),
}

impl Rt60Source {
    pub fn resolve(&self, signal: &[f64], config: &Arc<StftConfig>) -> Result<f64> {
        match self {
            Rt60Source::Given(rt) => Ok(*rt),
            Rt60Source::Oracle(rir) => schroeder_rt60(rir),
            Rt60Source::Blind(cal) => estimate_rt60(signal, config, cal),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub steps: usize,
    /// Learning rate relative to the RMS magnitude of the input STFT.
    pub step_size: f64,
    pub band_radius: usize,
    pub seed: u64,
    pub log_every: usize,
    pub optimizer: Optimizer,
    /// Reuse the first RIR draw for every step.
    pub freeze_rir: bool,
    pub loss: LossParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            step_size: 1e-2,
            band_radius: DEFAULT_BAND_RADIUS,
            seed: 0,
            log_every: 1,
            optimizer: Optimizer::Adam,
            freeze_rir: false,
            loss: LossParams::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {} must be positive", self.step_size)));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidConfig("log_every must be at least 1".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub loss_trace: Vec<f64>,
    pub rt60_used: f64,
    pub final_loss: f64,
}

struct Adam {
    m: Vec<[f64; 2]>,
    v: Vec<[f64; 2]>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-12;

    fn new(n: usize) -> Self {
        Self {
            m: vec![[0.0; 2]; n],
            v: vec![[0.0; 2]; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [Complex64], grad: &[Complex64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((xi, g), m), v) in x.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            let g = [2.0 * g.re, 2.0 * g.im];
            let mut delta = [0.0; 2];
            for c in 0..2 {
                m[c] = Self::B1 * m[c] + (1.0 - Self::B1) * g[c];
                v[c] = Self::B2 * v[c] + (1.0 - Self::B2) * g[c] * g[c];
                delta[c] = lr * (m[c] / c1) / ((v[c] / c2).sqrt() + Self::EPS);
            }
            xi.re -= delta[0];
            xi.im -= delta[1];
        }
    }
}

fn rms_magnitude(spec: &ComplexSpectrogram) -> f64 {
    (spec.norm_sqr() / spec.data().len().max(1) as f64).sqrt()
}

/// Dereverberates `signal`; the estimate has the input's length.
pub fn dereverb(
    signal: &[f64],
    source: &Rt60Source,
    config: &Arc<StftConfig>,
    solver: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    solver.validate()?;
    let fs = config.sample_rate() as usize;
    if signal.len() < fs {
        return Err(Error::TooShort(format!("{} samples is under 1 s", signal.len())));
    }
    let rt60 = source.resolve(signal, config)?;
    let acoustic = AcousticParams::new(rt60, config.sample_rate());
    acoustic.validate()?;

    let reference = stft(signal, config)?;
    let mut estimate = reference.clone();
    let plan = CtfPlan::new(config, solver.band_radius)?;
    let lr = solver.step_size * rms_magnitude(&reference);
    let mut adam = Adam::new(estimate.data().len());
    let mut seeds = ChaCha8Rng::seed_from_u64(solver.seed);
    let frozen_seed: u64 = seeds.gen();

    let mut trace = Vec::with_capacity(solver.steps / solver.log_every + 1);
    let mut last_ctf = None;
    for step in 0..solver.steps {
        let rir_seed = if solver.freeze_rir || step == 0 { frozen_seed } else { seeds.gen() };
        let ctf = plan.build(&synth_rir(&acoustic, rir_seed)?)?;
        let (loss, grad) = loss_gradient(&estimate, &reference, &ctf, &solver.loss)?;
        if step % solver.log_every == 0 {
            trace.push(loss);
        }
        match solver.optimizer {
            Optimizer::Adam => adam.step(estimate.data_mut(), grad.data(), lr),
            Optimizer::Plain => {
                for (x, g) in estimate.data_mut().iter_mut().zip(grad.data()) {
                    *x -= 2.0 * solver.step_size * g;
                }
            }
        }
        last_ctf = Some(ctf);
    }
    let ctf = last_ctf.expect("at least one step");
    let final_loss = reverb_match_loss(&ctf_convolve(&estimate, &ctf)?, &reference, &solver.loss)?;
    let output = istft(&estimate, signal.len())?;
    Ok((
        output,
        SolveReport {
            loss_trace: trace,
            rt60_used: rt60,
            final_loss,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairItem {
    pub reverberant: Vec<f64>,
    pub dry: Vec<f64>,
    pub rt60: f64,
    pub dry_index: usize,
}

/// Synthetic reverberant/dry pairs with RT60 drawn uniformly from
/// `rt60_range`. The reverberant signal keeps the full convolution length.
pub fn make_pairs(
    dry_signals: &[Vec<f64>],
    rt60_range: (f64, f64),
    count: usize,
    seed: u64,
    sample_rate: u32,
) -> Result<Vec<PairItem>> {
    if dry_signals.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = rt60_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidConfig(format!("bad RT60 range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rt60 = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            let dry_index = rng.gen_range(0..dry_signals.len());
            let rir_seed: u64 = rng.gen();
            let rir = normalize_align(&synth_rir(&AcousticParams::new(rt60, sample_rate), rir_seed)?)?;
            let dry = dry_signals[dry_index].clone();
            Ok(PairItem {
                reverberant: time_convolve(&dry, &rir)?,
                dry,
                rt60,
                dry_index,
            })
        })
        .collect()
}
