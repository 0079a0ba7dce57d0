//! Command-line front end: WAV handling and the `reverb-match` subcommands.

pub mod error;
pub mod wav;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use reverb_match::{
    compute_ctf, ctf_convolve, dereverb, istft, make_pairs, stft, synth_rir, time_convolve, AcousticParams,
    Calibration, Rir, Rt60Source, SolverConfig, StftConfig,
};

pub use error::CliError;
use wav::{read_wav, write_wav, OutputFormat, ReadOptions, WavBuffer, PROCESSING_RATE};

/// Environment variable bounding the worker thread count.
pub const THREADS_ENV: &str = "REVERB_MATCH_THREADS";

const MANIFEST_HEADER: [&str; 3] = ["path_reverb", "path_dry", "rt60_seconds"];

#[derive(Debug, Parser)]
#[command(name = "reverb-match", version, about = "Reverberation matching toolkit")]
struct Cli {
    /// Average multichannel input to mono.
    #[arg(long, global = true)]
    mixdown: bool,
    /// Resample input at other rates to 16 kHz.
    #[arg(long, global = true)]
    resample: bool,
    /// Sample format of written WAV files.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::F32)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a Polack room impulse response.
    SynthRir(SynthRirArgs),
    /// Apply a room impulse response to a signal.
    Reverberate(ReverberateArgs),
    /// Print a blind RT60 estimate in seconds.
    #[command(name = "estimate-rt60")]
    EstimateRt60(EstimateArgs),
    /// Fit the blind estimator's calibration on a pair manifest.
    #[command(name = "calibrate-rt60")]
    CalibrateRt60(CalibrateArgs),
    /// Dereverberate a signal.
    Dereverb(DereverbArgs),
    /// Build synthetic reverberant/dry pairs and a manifest.
    MakePairs(MakePairsArgs),
    /// Print SI-SDR and log-spectral distance as JSON.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthRirArgs {
    #[arg(long)]
    rt60: f64,
    /// Mixing time in milliseconds.
    #[arg(long, default_value_t = 20.0)]
    nm_ms: f64,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    /// Length in seconds; defaults to min(1.5 RT60, 1.5 s).
    #[arg(long)]
    len_s: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Time,
    Ctf,
    CtfBanded,
}

#[derive(Debug, Args)]
struct ReverberateArgs {
    #[arg(long)]
    rir: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Time)]
    mode: Mode,
    #[arg(long, default_value_t = reverb_match::ctf::DEFAULT_BAND_RADIUS)]
    band_radius: usize,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Calibration JSON; the raw estimate is printed without it.
    #[arg(long)]
    cal: Option<PathBuf>,
    input: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["rt60", "blind", "oracle_rir"])))]
struct DereverbArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    rt60: Option<f64>,
    #[arg(long, requires = "cal")]
    blind: bool,
    #[arg(long)]
    cal: Option<PathBuf>,
    #[arg(long)]
    oracle_rir: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    step_size: f64,
    #[arg(long, default_value_t = reverb_match::ctf::DEFAULT_BAND_RADIUS)]
    band_radius: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MakePairsArgs {
    #[arg(long)]
    dry_dir: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    rt60_min: f64,
    #[arg(long, default_value_t = 1.0)]
    rt60_max: f64,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    est: PathBuf,
}

struct Context {
    read: ReadOptions,
    format: OutputFormat,
    stft: Arc<StftConfig>,
}

impl Context {
    fn read(&self, path: &Path) -> Result<WavBuffer, CliError> {
        read_wav(path, self.read)
    }

    fn write(&self, path: &Path, samples: Vec<f64>) -> Result<(), CliError> {
        write_wav(path, &WavBuffer::new(samples, PROCESSING_RATE), self.format)
    }
}

/// Runs the CLI with process stdout and stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    configure_threads();
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context {
        read: ReadOptions {
            mixdown: cli.mixdown,
            resample: cli.resample,
        },
        format: cli.format,
        stft: Arc::new(StftConfig::default()),
    };
    match cli.command {
        Command::SynthRir(a) => synth_rir_cmd(&ctx, a),
        Command::Reverberate(a) => reverberate_cmd(&ctx, a),
        Command::EstimateRt60(a) => {
            let x = ctx.read(&a.input)?;
            let rt = match &a.cal {
                Some(path) => reverb_match::estimate_rt60(&x.samples, &ctx.stft, &read_calibration(path)?)?,
                None => reverb_match::estimate_rt60_raw(&x.samples, &ctx.stft)?,
            };
            writeln!(out, "{rt}").map_err(|e| CliError::Io(e.to_string()))
        }
        Command::CalibrateRt60(a) => calibrate_cmd(&ctx, a),
        Command::Dereverb(a) => dereverb_cmd(&ctx, a),
        Command::MakePairs(a) => make_pairs_cmd(&ctx, a),
        Command::Eval(a) => {
            let r = ctx.read(&a.reference)?;
            let e = ctx.read(&a.est)?;
            let report = reverb_match::metrics::evaluate(&r.samples, &e.samples, &ctx.stft)?;
            let json = serde_json::to_string(&report).map_err(|e| CliError::Json(e.to_string()))?;
            writeln!(out, "{json}").map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn synth_rir_cmd(ctx: &Context, a: SynthRirArgs) -> Result<(), CliError> {
    if a.rt60.is_nan() || a.rt60 <= 0.0 || a.nm_ms.is_nan() || a.nm_ms < 0.0 || a.sigma.is_nan() || a.sigma <= 0.0 {
        return Err(CliError::Usage("--rt60 and --sigma must be positive, --nm-ms non-negative".into()));
    }
    let fs = PROCESSING_RATE as f64;
    let mut params = AcousticParams::new(a.rt60, PROCESSING_RATE)
        .with_mixing_time((a.nm_ms * 1e-3 * fs).round() as usize)
        .with_sigma(a.sigma);
    if let Some(len) = a.len_s {
        if len.is_nan() || len <= 0.0 {
            return Err(CliError::Usage("--len-s must be positive".into()));
        }
        params = params.with_rir_len((len * fs).round() as usize);
    }
    let rir = synth_rir(&params, a.seed)?;
    ctx.write(&a.output, rir.samples)
}

fn reverberate_cmd(ctx: &Context, a: ReverberateArgs) -> Result<(), CliError> {
    let x = ctx.read(&a.input)?;
    let h = ctx.read(&a.rir)?;
    let rir = Rir::new(h.samples, PROCESSING_RATE);
    let out_len = x.samples.len() + rir.len().max(1) - 1;
    let y = match a.mode {
        Mode::Time => time_convolve(&x.samples, &rir)?,
        Mode::Ctf | Mode::CtfBanded => {
            let radius = if a.mode == Mode::Ctf { ctx.stft.n_fft() / 2 } else { a.band_radius };
            let ctf = compute_ctf(&rir, &ctx.stft, radius)?;
            let spec = ctf_convolve(&stft(&x.samples, &ctx.stft)?, &ctf)?;
            istft(&spec, out_len)?
        }
    };
    ctx.write(&a.output, y)
}

fn read_calibration(path: &Path) -> Result<Calibration, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

struct ManifestRow {
    reverb: PathBuf,
    rt60: f64,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Manifest(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Manifest(format!("missing column {name}")))
    };
    let (rev_col, rt_col) = (column(MANIFEST_HEADER[0])?, column(MANIFEST_HEADER[2])?);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Manifest(e.to_string()))?;
        let rt60: f64 = record[rt_col]
            .trim()
            .parse()
            .map_err(|_| CliError::Manifest(format!("row {}: bad rt60 '{}'", i + 1, &record[rt_col])))?;
        rows.push(ManifestRow {
            reverb: base.join(&record[rev_col]),
            rt60,
        });
    }
    Ok(rows)
}

fn calibrate_cmd(ctx: &Context, a: CalibrateArgs) -> Result<(), CliError> {
    let rows = read_manifest(&a.manifest)?;
    let pairs = rows
        .par_iter()
        .map(|row| Ok((ctx.read(&row.reverb)?.samples, row.rt60)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let cal = reverb_match::calibrate(&pairs, &ctx.stft)?;
    write_json(&a.output, &cal)
}

fn dereverb_cmd(ctx: &Context, a: DereverbArgs) -> Result<(), CliError> {
    let x = ctx.read(&a.input)?;
    let source = if let Some(rt) = a.rt60 {
        Rt60Source::Given(rt)
    } else if let Some(path) = &a.oracle_rir {
        Rt60Source::Oracle(Rir::new(ctx.read(path)?.samples, PROCESSING_RATE))
    } else {
        let path = a.cal.as_ref().ok_or_else(|| CliError::Usage("--blind needs --cal".into()))?;
        Rt60Source::Blind(read_calibration(path)?)
    };
    let solver = SolverConfig {
        steps: a.steps,
        step_size: a.step_size,
        band_radius: a.band_radius,
        seed: a.seed,
        ..SolverConfig::default()
    };
    let (y, report) = dereverb(&x.samples, &source, &ctx.stft, &solver)?;
    ctx.write(&a.output, y)?;
    match &a.report {
        Some(path) => write_json(path, &report),
        None => Ok(()),
    }
}

/// `target` relative to `base` when it lies below it, else absolute.
fn manifest_path(base: &Path, target: &Path) -> Result<String, CliError> {
    let target = fs::canonicalize(target).map_err(|e| CliError::io(target, e))?;
    let base = fs::canonicalize(base).map_err(|e| CliError::io(base, e))?;
    let shown = target.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(target);
    Ok(shown.to_string_lossy().into_owned())
}

fn make_pairs_cmd(ctx: &Context, a: MakePairsArgs) -> Result<(), CliError> {
    let mut names: Vec<PathBuf> = fs::read_dir(&a.dry_dir)
        .map_err(|e| CliError::io(&a.dry_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("wav")))
        .collect();
    names.sort();
    let dry = names
        .par_iter()
        .map(|p| Ok(ctx.read(p)?.samples))
        .collect::<Result<Vec<_>, CliError>>()?;
    if dry.is_empty() && a.count > 0 {
        return Err(CliError::Manifest(format!("no .wav files in {}", a.dry_dir.display())));
    }
    let items = if a.count == 0 {
        Vec::new()
    } else {
        make_pairs(&dry, (a.rt60_min, a.rt60_max), a.count, a.seed, PROCESSING_RATE)?
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let manifest_dir = match a.output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut writer = csv::Writer::from_path(&a.output).map_err(|e| CliError::Manifest(e.to_string()))?;
    writer.write_record(MANIFEST_HEADER).map_err(|e| CliError::Manifest(e.to_string()))?;
    for (i, item) in items.into_iter().enumerate() {
        // one gain per pair keeps both files in range without changing SI-SDR
        let peak = item.reverberant.iter().chain(&item.dry).fold(0.0f64, |m, x| m.max(x.abs()));
        let gain = if peak > 0.99 { 0.99 / peak } else { 1.0 };
        let reverb_path = a.out_dir.join(format!("pair_{i:04}_reverb.wav"));
        let dry_path = a.out_dir.join(format!("pair_{i:04}_dry.wav"));
        ctx.write(&reverb_path, item.reverberant.iter().map(|x| x * gain).collect())?;
        ctx.write(&dry_path, item.dry.iter().map(|x| x * gain).collect())?;
        writer
            .write_record([
                manifest_path(&manifest_dir, &reverb_path)?,
                manifest_path(&manifest_dir, &dry_path)?,
                format!("{}", item.rt60),
            ])
            .map_err(|e| CliError::Manifest(e.to_string()))?;
    }
    writer.flush().map_err(|e| CliError::io(&a.output, e))
}
