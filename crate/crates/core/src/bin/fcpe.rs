//! `fcpe` batch command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use fcpe::archive::TensorArchive;
use fcpe::audio::{load_wav, write_wav, AudioBuffer};
use fcpe::augment::{beta_for_name, gen_colored_noise, mix_at_snr, NoiseSpec};
use fcpe::eval::{
    eval_matrix, load_dataset, measure_rtf, Condition, EvalOptions, LabelFormat, NoiseSource, Provenance,
};
use fcpe::mel::{read_matrix_dump, MelConfig};
use fcpe::model::{count_flops, count_params, macs_per_frame, LynxNet, ModelConfig};
use fcpe::pipeline::{Pipeline, PitchEstimator};
use fcpe::pitch::{make_target, PitchGrid, N_BINS};
use fcpe::train::{
    build_frame_set, grad_check, harmonic_tone, head_loss_and_grad, synth_labeled_sines, train_linear_head,
    training_rpa, FeatureSource, SynthPattern, SynthSpec, ToyTrainConfig, SYNTH_STEP_S,
};
use fcpe::FcpeError;

const EXIT_OTHER: u8 = 1;
const EXIT_ARGS: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_AUDIO: u8 = 4;
const EXIT_PER_FILE: u8 = 5;

/// Pitch estimation, evaluation and benchmarking with FCPE models.
#[derive(Parser, Debug)]
#[command(name = "fcpe", version)]
struct Cli {
    /// key=value file supplying defaults for any long flag; command-line flags win
    #[arg(long, global = true, value_name = "PATH")]
    flags_file: Option<PathBuf>,
    /// Worker threads for directory-mode commands (default: logical cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Extra progress output on stderr (repeat for more)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate pitch tracks for a WAV file or a directory of WAV files
    Infer(InferArgs),
    /// Score a model on a labeled dataset under noise conditions
    Eval(EvalArgs),
    /// Measure the real-time factor
    Bench(BenchArgs),
    /// Count parameters and FLOPs of a model configuration
    Flops(FlopsArgs),
    /// Generate colored noise
    Noise(NoiseArgs),
    /// Mix noise into a directory tree of WAVs at several SNRs
    Corrupt(CorruptArgs),
    /// Check the analytic head gradient against finite differences
    Gradcheck(GradcheckArgs),
    /// Train a linear pitch head on synthetic tones
    Trainhead(TrainheadArgs),
    /// Write a randomly initialized model archive
    Init(InitArgs),
    /// Run a model on a MEL0 input dump and compare with an expected output dump
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Model archive (FCPEWT01)
    #[arg(long, env = "FCPE_MODEL", value_name = "PATH")]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArg,
    /// WAV file or directory searched recursively for .wav files
    #[arg(long, value_name = "WAV_OR_DIR")]
    input: PathBuf,
    /// Output file (single input, default stdout) or directory (directory input)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
    /// Voicing threshold on the peak bin probability
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Directory pairing NAME.wav with NAME.csv (csv_hz) or NAME.pv (mir1k_pv)
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Label format: csv_hz or mir1k_pv
    #[arg(long, default_value = "csv_hz")]
    labels: String,
    /// white, pink, brownian, violet or file:PATH
    #[arg(long, default_value = "white")]
    noise: String,
    /// Comma-separated SNRs in dB; empty for clean only
    #[arg(long, default_value = "20,0,-20", allow_hyphen_values = true)]
    snr: String,
    /// Noise draws per noisy condition
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Base of the per-draw noise seeds
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Pitch tolerance in cents
    #[arg(long, default_value_t = 50.0)]
    tol_cents: f64,
    /// CSV report path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Also write the aligned-text table here
    #[arg(long, value_name = "PATH")]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Model archive; a randomly initialized default-size model if absent
    #[arg(long, env = "FCPE_MODEL", value_name = "PATH")]
    model: Option<PathBuf>,
    /// Audio duration in seconds
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    /// Additionally time `--jobs` concurrent copies for aggregate throughput
    #[arg(long)]
    throughput: bool,
}

#[derive(Args, Debug)]
struct FlopsArgs {
    /// Model config as key=value lines (d_model, n_layers, dw_kernel, expand, ...)
    #[arg(long, value_name = "PATH", conflicts_with = "model")]
    config: Option<PathBuf>,
    /// Read the config from a model archive instead
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Audio duration in seconds
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Spectral exponent (PSD ~ 1/f^beta)
    #[arg(long, allow_hyphen_values = true, conflicts_with = "color")]
    beta: Option<f64>,
    /// violet, white, pink or brownian
    #[arg(long)]
    color: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
    /// Output WAV (float32)
    #[arg(long, value_name = "WAV")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CorruptArgs {
    /// Input directory searched recursively for .wav files
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// white, pink, brownian, violet or file:PATH
    #[arg(long, default_value = "white")]
    noise: String,
    /// Comma-separated SNRs in dB
    #[arg(long, default_value = "20,0,-20", allow_hyphen_values = true)]
    snr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output root; one NOISE_SNRdB subtree per SNR
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Fail above this relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PatternArg {
    Constant,
    Glide,
}

#[derive(Args, Debug)]
struct TrainheadArgs {
    /// Train on this model's backbone features and save the whole model; raw mel features if absent
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch_frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    clips: usize,
    #[arg(long, default_value_t = 220.0)]
    f0_min: f64,
    #[arg(long, default_value_t = 330.0)]
    f0_max: f64,
    #[arg(long, value_enum, default_value = "constant")]
    pattern: PatternArg,
    /// Seconds per clip
    #[arg(long, default_value_t = 0.5)]
    clip_seconds: f64,
    /// Output archive
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Loss curve CSV (epoch,loss)
    #[arg(long, value_name = "PATH")]
    loss_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InitArgs {
    /// Model config as key=value lines; default-size model if absent
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArg,
    /// MEL0 dump of the input log-mel matrix (T x 128)
    #[arg(long, value_name = "PATH")]
    mel: PathBuf,
    /// MEL0 dump of the expected output (T x 360)
    #[arg(long, value_name = "PATH")]
    expected: PathBuf,
    /// Fail when the maximum absolute deviation exceeds this
    #[arg(long)]
    tolerance: Option<f64>,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_OTHER,
            error: e.into(),
        }
    }
}

trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match apply_flags_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_ARGS);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Global options that take a value and may precede the subcommand name.
const GLOBAL_VALUE_FLAGS: [&str; 2] = ["--flags-file", "--jobs"];

/// Inserts `--key=value` for every entry of the `--flags-file` that the
/// command line does not already set.
fn apply_flags_file(mut args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut file = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--flags-file" {
            file = strs.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix("--flags-file=") {
            file = Some(v.to_string());
        }
    }
    let Some(file) = file else { return Ok(args) };
    let mut sub_pos = None;
    let mut i = 1;
    while i < strs.len() {
        let a = &strs[i];
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if !a.starts_with('-') {
            sub_pos = Some(i);
            break;
        }
        i += 1;
    }
    let Some(sub_pos) = sub_pos else { return Ok(args) };
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(&strs[sub_pos]) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading flags file {file}"))?;
    let mut inserted = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{file}:{}: expected key=value", n + 1))?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| anyhow!("{file}:{}: unknown flag {key:?} for {}", n + 1, sub.get_name()))?;
        if key == "flags-file" {
            bail!("{file}:{}: flags files cannot nest", n + 1);
        }
        let flag = format!("--{key}");
        let on_cli = strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if on_cli {
            continue;
        }
        if arg.get_action().takes_values() {
            inserted.push(OsString::from(format!("{flag}={value}")));
        } else {
            let on: bool = value
                .parse()
                .map_err(|_| anyhow!("{file}:{}: {key} expects true or false", n + 1))?;
            if on {
                inserted.push(OsString::from(flag));
            }
        }
    }
    let tail = args.split_off(sub_pos + 1);
    args.extend(inserted);
    args.extend(tail);
    Ok(args)
}

fn run(cli: Cli) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let verbose = cli.verbose;
    pool.install(|| match cli.command {
        Command::Infer(a) => cmd_infer(a, verbose),
        Command::Eval(a) => cmd_eval(a, verbose),
        Command::Bench(a) => cmd_bench(a, cli.jobs),
        Command::Flops(a) => cmd_flops(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Corrupt(a) => cmd_corrupt(a, verbose),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Trainhead(a) => cmd_trainhead(a),
        Command::Init(a) => cmd_init(a),
        Command::Compare(a) => cmd_compare(a),
    })
}

fn load_model(path: &Path) -> Result<Pipeline, Failure> {
    Pipeline::load(path)
        .with_context(|| format!("cannot load model {}", path.display()))
        .code(EXIT_MODEL)
}

fn load_audio(path: &Path) -> Result<AudioBuffer, Failure> {
    load_wav(path)
        .with_context(|| format!("cannot decode audio {}", path.display()))
        .code(EXIT_AUDIO)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Writes via a temporary sibling and a rename so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn write_wav_atomic(path: &Path, audio: &AudioBuffer) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let tmp = temp_sibling(path);
    write_wav(&tmp, audio)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn wav_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", dir.display()))?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(p.to_path_buf());
        }
    }
    Ok(out)
}

fn render_track(track: &fcpe::track::PitchTrack, format: OutFormat) -> String {
    match format {
        OutFormat::Csv => track.to_csv(),
        OutFormat::Json => track.to_json() + "\n",
    }
}

fn cmd_infer(a: InferArgs, verbose: u8) -> CliResult {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(anyhow!("--threshold must be in [0, 1], got {}", a.threshold)).code(EXIT_ARGS);
    }
    if !a.input.exists() {
        return Err(anyhow!("input {} does not exist", a.input.display())).code(EXIT_ARGS);
    }
    let pipeline = load_model(&a.model.model)?.with_threshold(a.threshold);
    if !a.input.is_dir() {
        let audio = load_audio(&a.input)?;
        let track = pipeline.estimate(&audio)?;
        let text = render_track(&track, a.format);
        match &a.out {
            Some(out) => write_atomic(out, text.as_bytes())?,
            None => print!("{text}"),
        }
        return Ok(());
    }
    let out_dir = a
        .out
        .as_ref()
        .ok_or_else(|| anyhow!("--out DIR is required when --input is a directory"))
        .code(EXIT_ARGS)?;
    let files = wav_files(&a.input)?;
    let ext = match a.format {
        OutFormat::Csv => "csv",
        OutFormat::Json => "json",
    };
    let failures: Vec<String> = files
        .par_iter()
        .filter_map(|path| {
            let rel = path.strip_prefix(&a.input).unwrap_or(path);
            let dest = out_dir.join(rel).with_extension(ext);
            let result = (|| -> anyhow::Result<()> {
                let audio = load_wav(path)?;
                let track = pipeline.estimate(&audio)?;
                write_atomic(&dest, render_track(&track, a.format).as_bytes())
            })();
            match result {
                Ok(()) => {
                    if verbose > 0 {
                        eprintln!("{} -> {}", path.display(), dest.display());
                    }
                    None
                }
                Err(e) => Some(format!("{}: {e:#}", path.display())),
            }
        })
        .collect();
    for f in &failures {
        eprintln!("failed: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} of {} files failed", failures.len(), files.len())).code(EXIT_PER_FILE)
    }
}

fn parse_snr_list(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.trim_end_matches("dB")
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| anyhow!("bad SNR value {t:?}"))
        })
        .collect::<anyhow::Result<_>>()
        .code(EXIT_ARGS)
}

fn parse_noise(s: &str) -> Result<NoiseSource, Failure> {
    NoiseSource::parse(s).map_err(|e| {
        let code = match e {
            FcpeError::Config(_) => EXIT_ARGS,
            _ => EXIT_AUDIO,
        };
        Failure {
            code,
            error: anyhow::Error::new(e).context(format!("noise {s:?}")),
        }
    })
}

fn sha256_hex(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn cmd_eval(a: EvalArgs, verbose: u8) -> CliResult {
    let format = LabelFormat::parse(&a.labels).code(EXIT_ARGS)?;
    if a.seeds == 0 {
        return Err(anyhow!("--seeds must be at least 1")).code(EXIT_ARGS);
    }
    let snrs = parse_snr_list(&a.snr)?;
    let pipeline = load_model(&a.model.model)?;
    let model_hash = sha256_hex(&a.model.model).code(EXIT_MODEL)?;
    let mut conditions = vec![Condition::Clean];
    if !snrs.is_empty() {
        let noise = parse_noise(&a.noise)?;
        conditions.extend(snrs.iter().map(|&snr_db| Condition::Noisy {
            noise: noise.clone(),
            snr_db,
        }));
    }
    let frame_rate = pipeline.frontend().config().frame_rate();
    let dataset = load_dataset(&a.dataset, format, frame_rate).map_err(|e| {
        let code = match e {
            FcpeError::Parse { .. } | FcpeError::Format { .. } if is_label_error(&e) => EXIT_OTHER,
            FcpeError::File { .. } | FcpeError::Io(_) if !a.dataset.is_dir() => EXIT_ARGS,
            _ => EXIT_AUDIO,
        };
        Failure {
            code,
            error: anyhow::Error::new(e).context(format!("loading dataset {}", a.dataset.display())),
        }
    })?;
    for p in &dataset.unpaired {
        eprintln!("warning: skipping unpaired file {}", p.display());
    }
    if dataset.clips.is_empty() {
        return Err(anyhow!("no paired WAV/label files in {}", a.dataset.display())).code(EXIT_ARGS);
    }
    let opts = EvalOptions {
        seeds: a.seeds,
        tol_cents: a.tol_cents,
        base_seed: a.base_seed,
    };
    let provenance = Provenance {
        dataset: a.dataset.display().to_string(),
        model_hash,
        seeds: a.seeds,
    };
    let report = eval_matrix(&pipeline, &dataset, &conditions, &opts, provenance)?;
    if verbose > 0 {
        eprintln!(
            "{} corruption passes over {} clips",
            report.corruption_passes,
            dataset.clips.len()
        );
    }
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_atomic(&a.out, report.to_csv(Some(&format!("unix={stamp}"))).as_bytes())?;
    let table = report.to_table();
    if let Some(t) = &a.table {
        write_atomic(t, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn is_label_error(e: &FcpeError) -> bool {
    match e {
        FcpeError::Parse { .. } => true,
        FcpeError::Format { chunk, .. } => chunk == "labels",
        _ => false,
    }
}

fn bench_audio(seconds: f64) -> anyhow::Result<AudioBuffer> {
    let steps = (seconds / SYNTH_STEP_S).round() as usize;
    let f0: Vec<f64> = (0..steps)
        .map(|j| 220.0 * (1.0 + 0.5 * (j as f64 * 0.01).sin()))
        .collect();
    Ok(harmonic_tone(&f0, SYNTH_STEP_S, 16000)?)
}

fn cmd_bench(a: BenchArgs, jobs: Option<usize>) -> CliResult {
    if !(a.seconds >= 1.0) {
        return Err(anyhow!("--seconds must be at least 1")).code(EXIT_ARGS);
    }
    let pipeline = match &a.model {
        Some(p) => load_model(p)?,
        None => {
            println!("model: random default configuration (no --model given)");
            Pipeline::new(LynxNet::random(&ModelConfig::default(), 0)?, MelConfig::default())?
        }
    };
    let audio = bench_audio(a.seconds)?;
    let r = measure_rtf(&pipeline, &audio, a.warmup, a.reps)?;
    println!("t_audio   {:.6} s", r.t_audio);
    println!(
        "t_process {:.6} s (median of {}, {} warmup, single thread)",
        r.t_process, a.reps, a.warmup
    );
    println!("rtf       {:.6}", r.rtf);
    println!(
        "check     rtf * t_audio - t_process = {:.3e}",
        r.rtf * r.t_audio - r.t_process
    );
    println!("reference rtf 0.0062 reported on a GPU; not comparable to this CPU figure");
    if a.throughput {
        let copies = jobs.unwrap_or_else(rayon::current_num_threads).max(1);
        let t0 = Instant::now();
        (0..copies)
            .into_par_iter()
            .try_for_each(|_| pipeline.estimate(&audio).map(|_| ()))?;
        let wall = t0.elapsed().as_secs_f64();
        println!(
            "throughput {copies} concurrent runs in {wall:.3} s = {:.2} s of audio per second",
            copies as f64 * r.t_audio / wall
        );
    }
    Ok(())
}

fn read_model_config(path: &Path) -> Result<ModelConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .code(EXIT_ARGS)?;
    ModelConfig::from_kv_str(&text)
        .with_context(|| format!("in {}", path.display()))
        .code(EXIT_ARGS)
}

fn cmd_flops(a: FlopsArgs) -> CliResult {
    let cfg = match (&a.config, &a.model) {
        (Some(c), _) => read_model_config(c)?,
        (None, Some(m)) => {
            let archive = TensorArchive::load(m)
                .with_context(|| format!("cannot load model {}", m.display()))
                .code(EXIT_MODEL)?;
            ModelConfig::from_metadata(archive.metadata()).code(EXIT_MODEL)?
        }
        (None, None) => ModelConfig::default(),
    };
    let frame_rate = MelConfig::default().frame_rate();
    let flops = count_flops(&cfg, a.seconds, frame_rate).code(EXIT_ARGS)?;
    println!(
        "config          d_model={} n_layers={} dw_kernel={} expand={} harmonic_emb={}",
        cfg.d_model, cfg.n_layers, cfg.dw_kernel, cfg.expand, cfg.use_harmonic_emb
    );
    println!("params          {}", count_params(&cfg)?);
    println!("macs_per_frame  {}", macs_per_frame(&cfg)?);
    println!("frame_rate      {frame_rate}");
    println!("seconds         {}", a.seconds);
    println!("flops           {flops}");
    println!("gflops_per_s    {:.6}", flops / a.seconds / 1e9);
    Ok(())
}

fn cmd_noise(a: NoiseArgs) -> CliResult {
    let beta = match (a.beta, &a.color) {
        (Some(b), _) => b,
        (None, Some(c)) => beta_for_name(c)
            .ok_or_else(|| anyhow!("unknown color {c:?} (violet, white, pink, brownian)"))
            .code(EXIT_ARGS)?,
        (None, None) => return Err(anyhow!("one of --beta or --color is required")).code(EXIT_ARGS),
    };
    let len = (a.seconds * a.sample_rate as f64).round();
    if !(len >= 1.0) {
        return Err(anyhow!("--seconds too small")).code(EXIT_ARGS);
    }
    let spec = NoiseSpec::new(beta, a.seed, len as usize, a.sample_rate).code(EXIT_ARGS)?;
    write_wav_atomic(&a.out, &gen_colored_noise(&spec)?)?;
    Ok(())
}

fn snr_dir_name(noise: &str, snr: f64) -> String {
    let noise: String = noise
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{noise}_{snr}dB")
}

fn cmd_corrupt(a: CorruptArgs, verbose: u8) -> CliResult {
    let snrs = parse_snr_list(&a.snr)?;
    if snrs.is_empty() {
        return Err(anyhow!("--snr needs at least one value")).code(EXIT_ARGS);
    }
    if !a.input.is_dir() {
        return Err(anyhow!("--in {} is not a directory", a.input.display())).code(EXIT_ARGS);
    }
    let noise = parse_noise(&a.noise)?;
    let files = wav_files(&a.input)?;
    let jobs: Vec<(usize, &PathBuf, f64)> = files
        .iter()
        .enumerate()
        .flat_map(|(i, f)| snrs.iter().map(move |&s| (i, f, s)))
        .collect();
    let failures: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(i, path, snr)| {
            let rel = path.strip_prefix(&a.input).unwrap_or(path);
            let dest = a.out.join(snr_dir_name(noise.name(), snr)).join(rel);
            let result = (|| -> anyhow::Result<()> {
                let audio = load_wav(path)?;
                let seed = a.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                let n = noise.draw(audio.len(), audio.sample_rate(), seed)?;
                let mix = mix_at_snr(&audio, &n, snr)?;
                write_wav_atomic(&dest, &mix.audio)?;
                for ext in ["csv", "pv"] {
                    let label = path.with_extension(ext);
                    if label.is_file() {
                        write_atomic(&dest.with_extension(ext), &fs::read(&label)?)?;
                    }
                }
                if verbose > 0 && mix.tiled {
                    eprintln!("{}: noise tiled to cover the signal", path.display());
                }
                Ok(())
            })();
            result.err().map(|e| format!("{} at {snr} dB: {e:#}", path.display()))
        })
        .collect();
    for f in &failures {
        eprintln!("failed: {f}");
    }
    if failures.is_empty() {
        println!("wrote {} files under {}", jobs.len(), a.out.display());
        Ok(())
    } else {
        Err(anyhow!("{} of {} corruptions failed", failures.len(), jobs.len())).code(EXIT_PER_FILE)
    }
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let grid = PitchGrid::default();
    let (frames, dim) = (4, 6);
    let xs: Vec<f64> = (0..frames * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut ys = Vec::with_capacity(frames * N_BINS);
    for _ in 0..frames {
        ys.extend(make_target(rng.random_range(80.0..1000.0), &grid)?.into_inner());
    }
    let params: Vec<f64> = (0..N_BINS * dim + N_BINS)
        .map(|_| rng.random_range(-0.5..0.5))
        .collect();
    let f = |p: &[f64]| head_loss_and_grad(&xs, &ys, dim, N_BINS, p).expect("shapes are consistent");
    let err = grad_check(&f, &params, a.eps);
    println!("parameters        {}", params.len());
    println!("max_relative_err  {err:.3e}");
    if err > a.tolerance {
        return Err(anyhow!("gradient check failed: {err:.3e} > {:.1e}", a.tolerance)).code(EXIT_OTHER);
    }
    println!("ok (tolerance {:.1e})", a.tolerance);
    Ok(())
}

fn cmd_trainhead(a: TrainheadArgs) -> CliResult {
    let spec = SynthSpec {
        n_clips: a.clips,
        f0_range: (a.f0_min, a.f0_max),
        duration_s: a.clip_seconds,
        pattern: match a.pattern {
            PatternArg::Constant => SynthPattern::Constant,
            PatternArg::Glide => SynthPattern::Glide,
        },
        seed: a.seed,
        ..SynthSpec::default()
    };
    let clips = synth_labeled_sines(&spec).code(EXIT_ARGS)?;
    let cfg = ToyTrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_frames: a.batch_frames,
        seed: a.seed,
        ..ToyTrainConfig::default()
    };
    cfg.validate().code(EXIT_ARGS)?;
    let pipeline = match &a.model {
        Some(p) => load_model(p)?,
        None => Pipeline::new(LynxNet::zeros(&ModelConfig::toy(1, 1, 1))?, MelConfig::default())?,
    };
    let grid = PitchGrid::default();
    let source = match &a.model {
        Some(_) => FeatureSource::Backbone(pipeline.net()),
        None => FeatureSource::Mel,
    };
    let set = build_frame_set(&clips, pipeline.frontend(), &source, &grid, cfg.sigma_cents)?;
    let trained = train_linear_head(&set, &cfg)?;
    let acc = training_rpa(&trained.head, &set, &grid)?;
    let monotone = trained.loss_curve.windows(2).all(|w| w[1] <= w[0]);
    let head = trained.head.to_archive();
    let archive = match &a.model {
        Some(_) => {
            let mut full = pipeline.to_archive();
            for name in ["head.weight", "head.bias"] {
                let t = head.get(name).expect("head tensors present");
                full.insert(name, t.shape().to_vec(), t.data().to_vec())?;
            }
            full
        }
        None => {
            let mut h = head;
            h.extend_metadata(pipeline.frontend().config().to_metadata());
            h.set_metadata("head.features", "mel");
            h
        }
    };
    write_atomic(&a.out, &archive.to_bytes())?;
    if let Some(p) = &a.loss_csv {
        write_atomic(p, trained.loss_csv().as_bytes())?;
    }
    let first = trained.loss_curve.first().copied().unwrap_or(f64::NAN);
    let last = trained.loss_curve.last().copied().unwrap_or(f64::NAN);
    println!("frames        {}", set.frames);
    println!("epochs        {}", cfg.epochs);
    println!("loss          {first:.6} -> {last:.6}");
    println!("monotone      {monotone}");
    println!("training_rpa  {acc:.2}");
    Ok(())
}

fn cmd_init(a: InitArgs) -> CliResult {
    let cfg = match &a.config {
        Some(c) => read_model_config(c)?,
        None => ModelConfig::default(),
    };
    let pipeline = Pipeline::new(LynxNet::random(&cfg, a.seed)?, MelConfig::default())?;
    write_atomic(&a.out, &pipeline.to_archive().to_bytes())?;
    println!("wrote {} ({} parameters)", a.out.display(), count_params(&cfg)?);
    Ok(())
}

fn read_dump(path: &Path) -> Result<(usize, usize, Vec<f32>), Failure> {
    let f = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .code(EXIT_ARGS)?;
    read_matrix_dump(std::io::BufReader::new(f))
        .with_context(|| format!("reading {}", path.display()))
        .code(EXIT_OTHER)
}

fn cmd_compare(a: CompareArgs) -> CliResult {
    let pipeline = load_model(&a.model.model)?;
    let (frames, mels, input) = read_dump(&a.mel)?;
    let (e_frames, e_bins, expected) = read_dump(&a.expected)?;
    let cfg = pipeline.net().config();
    if mels != cfg.n_mels || e_frames != frames || e_bins != cfg.n_bins {
        return Err(anyhow!(
            "shape mismatch: input {frames}x{mels}, expected {e_frames}x{e_bins}, model wants Tx{} -> Tx{}",
            cfg.n_mels,
            cfg.n_bins
        ))
        .code(EXIT_ARGS);
    }
    let out = pipeline.net().forward_frames(frames, &input)?;
    let dev = out
        .as_slice()
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs() as f64)
        .fold(0.0, f64::max);
    println!("frames             {frames}");
    println!("max_abs_deviation  {dev:.3e}");
    if let Some(tol) = a.tolerance {
        if dev > tol {
            return Err(anyhow!("deviation {dev:.3e} exceeds {tol:.1e}")).code(EXIT_OTHER);
        }
    }
    Ok(())
}
