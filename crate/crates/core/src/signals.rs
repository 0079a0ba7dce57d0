//! Synthetic speech-like test material.
//!
//! Voiced "syllables" are harmonic series with a gliding pitch under a
//! random three-formant envelope, mixed with occasional noise bursts and
//! separated by silent gaps, so that reverberant versions contain free
//! decays. Deterministic given the seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Speech-like signal of `duration_s` seconds, peak-normalized to 0.5.
pub fn harmonic_utterance(duration_s: f64, sample_rate: u32, seed: u64) -> Vec<f64> {
    let fs = sample_rate as f64;
    let len = (duration_s * fs).round() as usize;
    let mut out = vec![0.0; len];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = (rng.gen_range(0.03..0.12) * fs) as usize;
    while pos < len {
        let seg = ((rng.gen_range(0.12..0.35) * fs) as usize).min(len - pos);
        let level = rng.gen_range(0.4..1.0);
        if rng.gen_bool(0.25) {
            noise_burst(&mut out[pos..pos + seg], fs, level * 0.3, &mut rng);
        } else {
            voiced(&mut out[pos..pos + seg], fs, level, &mut rng);
        }
        pos += seg + (rng.gen_range(0.12..0.45) * fs) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        for x in &mut out {
            *x *= 0.5 / peak;
        }
    }
    out
}

fn envelope(i: usize, n: usize, fs: f64) -> f64 {
    let attack = (0.01 * fs) as usize;
    let release = (0.015 * fs) as usize;
    if i < attack {
        i as f64 / attack as f64
    } else if i + release > n {
        (n - i) as f64 / release as f64
    } else {
        1.0
    }
}

fn voiced(dst: &mut [f64], fs: f64, level: f64, rng: &mut ChaCha8Rng) {
    let f0_start: f64 = rng.gen_range(95.0..230.0);
    let f0_end = f0_start * rng.gen_range(0.8..1.25);
    let formants = [
        (rng.gen_range(300.0..850.0), 90.0),
        (rng.gen_range(900.0..2400.0), 140.0),
        (rng.gen_range(2400.0..3600.0), 220.0),
    ];
    let gain = |freq: f64| -> f64 {
        formants
            .iter()
            .map(|&(centre, bw)| 1.0 / (1.0 + ((freq - centre) / bw).powi(2)))
            .sum::<f64>()
            + 0.02
    };
    let n = dst.len();
    let max_harmonic = (4500.0 / f0_start.min(f0_end)) as usize;
    let phases: Vec<f64> = (0..max_harmonic).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let mut phase0 = 0.0;
    for (i, slot) in dst.iter_mut().enumerate() {
        let frac = i as f64 / n.max(1) as f64;
        let f0 = f0_start + (f0_end - f0_start) * frac;
        phase0 += 2.0 * PI * f0 / fs;
        let mut v = 0.0;
        for (k, ph) in phases.iter().enumerate() {
            let freq = f0 * (k + 1) as f64;
            if freq > 0.45 * fs {
                break;
            }
            v += gain(freq) * ((k + 1) as f64 * phase0 + ph).sin();
        }
        *slot += level * envelope(i, n, fs) * v;
    }
}

fn noise_burst(dst: &mut [f64], fs: f64, level: f64, rng: &mut ChaCha8Rng) {
    let n = dst.len();
    let mut prev = 0.0;
    for (i, slot) in dst.iter_mut().enumerate() {
        let white: f64 = rng.gen_range(-1.0..1.0);
        // first difference tilts the burst towards high frequencies
        let v = white - 0.5 * prev;
        prev = white;
        *slot += level * envelope(i, n, fs) * v;
    }
}
