//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures are reported but only turn the exit status red when
//! `ACCEPTANCE_STRICT=1` is set, so the workspace test run still covers
//! every other target.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reverb_match::signals::harmonic_utterance;
use reverb_match::stft::stft_frames;
use reverb_match::{
    calibrate, compute_ctf, ctf_adjoint, ctf_convolve, dereverb, estimate_rt60, loss_gradient, make_pairs,
    reverb_match_loss, schroeder_rt60, sisdr, stft, synth_rir, time_convolve, AcousticParams, Calibration,
    Complex64, ComplexSpectrogram, LossParams, Rir, Rt60Source, SolverConfig, StftConfig,
};
use reverb_match_cli::wav::{write_wav, OutputFormat, WavBuffer};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn default_cfg() -> Arc<StftConfig> {
    Arc::new(StftConfig::default())
}

struct Instance {
    spec: ComplexSpectrogram,
    rir: Rir,
    reference_for: Box<dyn Fn(usize) -> ComplexSpectrogram>,
}

/// Speech-like signals of 1 to 3 s and decaying noise RIRs of 256 to 4096 taps.
fn ctf_instances() -> Vec<Instance> {
    let cfg = default_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..10)
        .map(|i| {
            let duration = rng.gen_range(1.0..3.0);
            let s = harmonic_utterance(duration, 16000, 100 + i);
            let n_h = rng.gen_range(256..=4096);
            let rate = rng.gen_range(2.0..8.0) / n_h as f64;
            let mut taps: Vec<f64> = (0..n_h).map(|n| rng.gen_range(-1.0..1.0) * (-rate * n as f64).exp()).collect();
            taps[0] = 1.0;
            let rir = Rir::new(taps, 16000);
            let wet = time_convolve(&s, &rir).unwrap();
            let cfg2 = Arc::clone(&cfg);
            Instance {
                spec: stft(&s, &cfg).unwrap(),
                rir,
                reference_for: Box::new(move |frames| stft_frames(&wet, &cfg2, frames)),
            }
        })
        .collect()
}

fn criterion_ctf_exactness(instances: &[Instance]) -> Outcome {
    let cfg = default_cfg();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in instances {
        let ctf = compute_ctf(&inst.rir, &cfg, cfg.n_fft() / 2).unwrap();
        let y = ctf_convolve(&inst.spec, &ctf).unwrap();
        let reference = (inst.reference_for)(y.n_frames());
        worst = worst.max(y.relative_error(&reference));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-6 && elapsed < Duration::from_secs(60),
        format!("max relative error {worst:.3e} (< 1e-6), {:.1} s (< 60 s)", elapsed.as_secs_f64()),
    )
}

fn criterion_banded(instances: &[Instance]) -> Outcome {
    let cfg = default_cfg();
    let mut monotone = 0;
    let mut f4_better = 0;
    let mut worst_ratio = 0.0f64;
    for inst in instances {
        let errors: Vec<f64> = [0, 1, 2, 4, 8]
            .iter()
            .map(|&r| {
                let y = ctf_convolve(&inst.spec, &compute_ctf(&inst.rir, &cfg, r).unwrap()).unwrap();
                y.relative_error(&(inst.reference_for)(y.n_frames()))
            })
            .collect();
        monotone += errors.windows(2).all(|w| w[1] <= w[0]) as usize;
        f4_better += (errors[3] < errors[0]) as usize;
        worst_ratio = worst_ratio.max(errors[3] / errors[0]);
    }
    let n = instances.len();
    outcome(
        monotone == n && f4_better == n,
        format!("non-increasing in {monotone}/{n}, F'=4 below F'=0 in {f4_better}/{n} (worst ratio {worst_ratio:.3})"),
    )
}

fn random_spec(rng: &mut ChaCha8Rng, cfg: &Arc<StftConfig>, frames: usize) -> ComplexSpectrogram {
    let data = (0..cfg.n_bins() * frames)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ComplexSpectrogram::from_data(Arc::clone(cfg), data).unwrap()
}

/// Loss straight from the definition, entry by entry.
fn scalar_loss(est: &ComplexSpectrogram, reference: &ComplexSpectrogram, lambda: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for (i, e) in est.data().iter().enumerate() {
        let r = reference.data().get(i).copied().unwrap_or_default();
        let d = (e.re - r.re).powi(2) + (e.im - r.im).powi(2);
        let l = ((1.0 + gamma * e.norm()) / (1.0 + gamma * r.norm())).ln();
        total += d + lambda * l * l;
    }
    total
}

fn criterion_gradient() -> Outcome {
    let cfg = Arc::new(StftConfig::new(32, 16, 16000).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = LossParams::default();
    let step = 1e-4;
    let mut worst_fd = 0.0f64;
    for trial in 0..5 {
        let t_s = 6 + trial % 3;
        let taps: Vec<f64> = (0..rng.gen_range(2..=17)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ctf = compute_ctf(&Rir::new(taps, 16000), &cfg, 2).unwrap();
        let s = random_spec(&mut rng, &cfg, t_s);
        let y = random_spec(&mut rng, &cfg, t_s + ctf.n_ctf_frames() - 1);
        let (_, grad) = loss_gradient(&s, &y, &ctf, &params).unwrap();
        let loss_at = |x: &ComplexSpectrogram| scalar_loss(&ctf_convolve(x, &ctf).unwrap(), &y, 1.0, 1.0);
        let mut pairs = Vec::new();
        let mut max_fd = 0.0f64;
        for i in 0..s.data().len() {
            for part in 0..2 {
                let (mut plus, mut minus) = (s.clone(), s.clone());
                let delta = if part == 0 { Complex64::new(step, 0.0) } else { Complex64::new(0.0, step) };
                plus.data_mut()[i] += delta;
                minus.data_mut()[i] -= delta;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
                let g = grad.data()[i];
                let analytic = 2.0 * if part == 0 { g.re } else { g.im };
                max_fd = max_fd.max(fd.abs());
                pairs.push((analytic, fd));
            }
        }
        for (a, fd) in pairs {
            worst_fd = worst_fd.max((a - fd).abs() / fd.abs().max(1e-3 * max_fd));
        }
    }

    let cfg = default_cfg();
    let rir = synth_rir(&AcousticParams::new(0.4, 16000), 5).unwrap();
    let ctf = compute_ctf(&rir, &cfg, 4).unwrap();
    let mut worst_dot = 0.0f64;
    for _ in 0..3 {
        let x = random_spec(&mut rng, &cfg, 20);
        let y = random_spec(&mut rng, &cfg, 20 + ctf.n_ctf_frames() - 1);
        let lhs = ctf_convolve(&x, &ctf).unwrap().inner(&y);
        let rhs = x.inner(&ctf_adjoint(&y, &ctf).unwrap());
        worst_dot = worst_dot.max((lhs - rhs).norm() / lhs.norm());
    }
    outcome(
        worst_fd < 1e-4 && worst_dot < 1e-10,
        format!("finite-difference error {worst_fd:.2e} (< 1e-4), adjoint mismatch {worst_dot:.2e} (< 1e-10)"),
    )
}

fn criterion_polack() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for rt in [0.2, 0.5, 1.0] {
        let params = AcousticParams::new(rt, 16000);
        let mut sum = 0.0;
        for seed in 0..10 {
            let rir = synth_rir(&params, seed).unwrap();
            pass &= rir.samples[0] == 1.0;
            pass &= rir.samples[1..=320].iter().all(|x| *x == 0.0);
            sum += schroeder_rt60(&rir).unwrap();
        }
        let mean = sum / 10.0;
        pass &= (mean - rt).abs() <= 0.1 * rt;
        details.push(format!("{rt} s -> {mean:.3} s"));
    }
    outcome(pass, format!("{} (within 10%), direct path and gap exact", details.join(", ")))
}

fn dry_pool(count: u64, duration: f64, seed: u64) -> Vec<Vec<f64>> {
    (0..count).map(|i| harmonic_utterance(duration, 16000, seed + i)).collect()
}

fn criterion_blind(cal_out: &mut Option<Calibration>) -> Outcome {
    let cfg = default_cfg();
    let dry = dry_pool(20, 2.0, 500);
    let train = make_pairs(&dry, (0.2, 1.0), 100, 1, 16000).unwrap();
    let pairs: Vec<(Vec<f64>, f64)> = train.into_iter().map(|p| (p.reverberant, p.rt60)).collect();
    let cal = match calibrate(&pairs, &cfg) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("calibration failed: {e}")),
    };
    *cal_out = Some(cal);

    let held_dry = dry_pool(10, 2.0, 900);
    let held = make_pairs(&held_dry, (0.2, 1.0), 50, 2, 16000).unwrap();
    let mut errors: Vec<f64> = held
        .iter()
        .map(|p| estimate_rt60(&p.reverberant, &cfg, &cal).map_or(f64::INFINITY, |e| (e - p.rt60).abs()))
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = 0.5 * (errors[24] + errors[25]);

    let medians: Vec<f64> = [0.2, 0.6, 1.0]
        .iter()
        .map(|&rt| {
            let mut est: Vec<f64> = (0..20)
                .map(|i| {
                    let rir = reverb_match::normalize_align(&synth_rir(&AcousticParams::new(rt, 16000), 3000 + i).unwrap())
                        .unwrap();
                    let wet = time_convolve(&held_dry[i as usize % held_dry.len()], &rir).unwrap();
                    estimate_rt60(&wet, &cfg, &cal).unwrap_or(f64::NAN)
                })
                .collect();
            est.sort_by(f64::total_cmp);
            0.5 * (est[9] + est[10])
        })
        .collect();
    let ordered = medians[0] < medians[1] && medians[1] < medians[2];
    outcome(
        median <= 0.15 && ordered,
        format!(
            "held-out median |error| {median:.3} s (<= 0.15 s), medians at 0.2/0.6/1.0 s: {:.3}/{:.3}/{:.3} s; slope {:.3}, intercept {:.3}",
            medians[0], medians[1], medians[2], cal.slope, cal.intercept
        ),
    )
}

fn criterion_end_to_end(cal: Option<Calibration>) -> Outcome {
    let Some(cal) = cal else {
        return outcome(false, "no calibration available".into());
    };
    let cfg = default_cfg();
    let start = Instant::now();
    let dry = dry_pool(5, 1.2, 1200);
    let items = make_pairs(&dry, (0.3, 0.8), 5, 9, 16000).unwrap();
    let solver = SolverConfig { seed: 4, ..SolverConfig::default() };
    let mut gains = Vec::new();
    let mut gaps = Vec::new();
    for item in &items {
        let mut wet = item.reverberant.clone();
        wet.truncate(item.dry.len());
        let base = sisdr(&item.dry, &wet).unwrap();
        let (oracle, _) = dereverb(&wet, &Rt60Source::Given(item.rt60), &cfg, &solver).unwrap();
        let oracle_gain = sisdr(&item.dry, &oracle).unwrap() - base;
        let blind_gain = match dereverb(&wet, &Rt60Source::Blind(cal), &cfg, &solver) {
            Ok((blind, _)) => sisdr(&item.dry, &blind).unwrap() - base,
            Err(_) => f64::NEG_INFINITY,
        };
        gains.push(oracle_gain);
        gaps.push((blind_gain - oracle_gain).abs());
    }
    let elapsed = start.elapsed();
    let pass = gains.iter().all(|g| *g >= 1.0) && gaps.iter().all(|g| *g <= 1.0) && elapsed < Duration::from_secs(600);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:+.2}")).collect::<Vec<_>>().join(" ");
    outcome(
        pass,
        format!(
            "oracle SI-SDR gains [{}] dB (>= +1 each), blind-oracle gaps [{}] dB (<= 1), {:.0} s (< 600 s)",
            fmt(&gains),
            fmt(&gaps),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_loss_identities() -> Outcome {
    let cfg = default_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let y = random_spec(&mut rng, &cfg, 7);
    let self_loss = reverb_match_loss(&y, &y, &LossParams::default()).unwrap();

    let tiny = Arc::new(StftConfig::new(2, 1, 16000).unwrap());
    let zero = ComplexSpectrogram::zeros(Arc::clone(&tiny), 1);
    let one = ComplexSpectrogram::from_data(tiny, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
    let single = reverb_match_loss(&zero, &one, &LossParams::default()).unwrap();
    // |0 - 1|^2 + (ln(1 / 2))^2
    let expected = 1.0 + (0.5f64).ln().powi(2);
    let pass = self_loss.abs() <= 1e-9 && (single - expected).abs() <= 1e-9;
    outcome(pass, format!("L(Y,Y) = {self_loss:.1e}, single entry {single:.12} vs {expected:.12} (within 1e-9)"))
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_reverb-match"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Runs every seeded command and returns the bytes of all outputs.
fn cli_session(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let dry_dir = root.join("dry");
    fs::create_dir_all(&dry_dir).map_err(|e| e.to_string())?;
    for i in 0..3 {
        let buf = WavBuffer::new(harmonic_utterance(1.5, 16000, 40 + i), 16000);
        write_wav(&dry_dir.join(format!("d{i}.wav")), &buf, OutputFormat::F32).map_err(|e| e.to_string())?;
    }
    let mut captured = Vec::new();
    cli(&["synth-rir", "--rt60", "0.5", "--seed", "7", "-o", &p("rir.wav")])?;
    cli(&["reverberate", "--rir", &p("rir.wav"), "--mode", "ctf-banded", &p("dry/d0.wav"), "-o", &p("wet.wav")])?;
    cli(&["make-pairs", "--dry-dir", &p("dry"), "--count", "8", "--seed", "3", "-o", &p("pairs.csv"), "--out-dir", &p("pairs")])?;
    cli(&["calibrate-rt60", "--manifest", &p("pairs.csv"), "-o", &p("cal.json")])?;
    captured.push(("estimate-rt60".to_string(), cli(&["estimate-rt60", "--cal", &p("cal.json"), &p("wet.wav")])?));
    cli(&["dereverb", &p("wet.wav"), "-o", &p("est.wav"), "--rt60", "0.5", "--steps", "5", "--seed", "2", "--report", &p("report.json")])?;
    cli(&["dereverb", &p("wet.wav"), "-o", &p("est_blind.wav"), "--blind", "--cal", &p("cal.json"), "--steps", "5", "--seed", "2"])?;
    captured.push(("eval".to_string(), cli(&["eval", "--ref", &p("wet.wav"), "--est", &p("est.wav")])?));
    let mut files = vec!["rir.wav", "wet.wav", "pairs.csv", "cal.json", "est.wav", "est_blind.wav", "report.json"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for i in 0..8 {
        files.push(format!("pairs/pair_{i:04}_reverb.wav"));
        files.push(format!("pairs/pair_{i:04}_dry.wav"));
    }
    for f in files {
        let bytes = fs::read(root.join(&f)).map_err(|e| format!("{f}: {e}"))?;
        captured.push((f, bytes));
    }
    Ok(captured)
}

fn criterion_determinism() -> Outcome {
    let run = || -> Result<Vec<(String, Vec<u8>)>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        cli_session(dir.path())
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => {
            let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
            outcome(
                differing.is_empty() && a.len() == b.len(),
                if differing.is_empty() {
                    format!("{} outputs byte-identical across two runs", a.len())
                } else {
                    format!("differing outputs: {}", differing.join(", "))
                },
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("command failed: {e}")),
    }
}

/// Criteria selected by `ACCEPTANCE_ONLY=3,8`; all when unset.
fn selected(n: usize) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|x| x.trim() == n.to_string()),
        Err(_) => true,
    }
}

fn main() {
    // `cargo test -- --list` and friends expect a listing, not a run
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let instances = if selected(1) || selected(2) { ctf_instances() } else { Vec::new() };
    let mut calibration = None;
    let mut failed = 0;
    let mut ran = 0;
    let mut report = |n: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        if !selected(n) {
            return;
        }
        let o = run();
        ran += 1;
        failed += (!o.pass) as usize;
        println!("{} [{n} {name}] {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "CTF exactness", &mut || criterion_ctf_exactness(&instances));
    report(2, "banded monotonicity", &mut || criterion_banded(&instances));
    report(3, "gradient correctness", &mut criterion_gradient);
    report(4, "Polack decay", &mut criterion_polack);
    report(5, "blind RT60", &mut || criterion_blind(&mut calibration));
    report(6, "end-to-end dereverberation", &mut || {
        if calibration.is_none() {
            criterion_blind(&mut calibration);
        }
        criterion_end_to_end(calibration)
    });
    report(7, "loss identities", &mut criterion_loss_identities);
    report(8, "determinism", &mut criterion_determinism);
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
