//! Pitch accuracy metrics, label ingestion, the noise-condition evaluation
//! matrix and the real-time-factor benchmark.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{load_wav, resample, AudioBuffer};
use crate::augment::{beta_for_name, gen_colored_noise, mix_at_snr, NoiseSpec};
use crate::error::{FcpeError, Result};
use crate::pipeline::PitchEstimator;
use crate::track::PitchTrack;

/// Tolerance for a pitch estimate to count as correct.
pub const DEFAULT_TOL_CENTS: f64 = 50.0;
/// Frame period of MIR-1K pitch-vector files.
pub const MIR1K_PERIOD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelFormat {
    /// `time,f0_hz` rows.
    CsvHz,
    /// One MIDI semitone value per 20 ms frame, 0 for unvoiced.
    Mir1kPv,
}

impl LabelFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv_hz" => Ok(Self::CsvHz),
            "mir1k_pv" => Ok(Self::Mir1kPv),
            other => Err(FcpeError::Config(format!(
                "unknown label format {other:?} (expected csv_hz or mir1k_pv)"
            ))),
        }
    }

    /// File extension paired with each WAV in a dataset directory.
    pub fn extension(self) -> &'static str {
        match self {
            Self::CsvHz => "csv",
            Self::Mir1kPv => "pv",
        }
    }
}

/// Parses label text into timestamps and f0 values (Hz).
pub fn parse_labels(text: &str, format: LabelFormat) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut times, mut f0) = (Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| FcpeError::Parse {
                    line: lineno,
                    message: format!("not a number: {:?}", s.trim()),
                })
        };
        match format {
            LabelFormat::CsvHz => {
                let mut cols = line.split(',');
                let (Some(t), Some(f), None) = (cols.next(), cols.next(), cols.next()) else {
                    return Err(FcpeError::Parse {
                        line: lineno,
                        message: format!("expected time,f0_hz, got {line:?}"),
                    });
                };
                if times.is_empty() && t.trim().parse::<f64>().is_err() && t.trim().starts_with(char::is_alphabetic) {
                    continue; // header row
                }
                let (t, f) = (parse(t)?, parse(f)?);
                if f < 0.0 {
                    return Err(FcpeError::Parse {
                        line: lineno,
                        message: format!("negative f0 {f}"),
                    });
                }
                times.push(t);
                f0.push(f);
            }
            LabelFormat::Mir1kPv => {
                let s = parse(line)?;
                times.push(MIR1K_PERIOD * (times.len() + 1) as f64);
                f0.push(if s > 0.0 {
                    440.0 * ((s - 69.0) / 12.0).exp2()
                } else {
                    0.0
                });
            }
        }
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(FcpeError::Format {
            chunk: "labels".into(),
            message: format!(
                "times are not strictly increasing at row {} ({} after {})",
                i + 2,
                times[i + 1],
                times[i]
            ),
        });
    }
    Ok((times, f0))
}

/// Resamples labels onto a uniform grid of `frame_rate` frames per second
/// starting at the first label time, by nearest-time lookup.
pub fn labels_to_track(times: &[f64], f0: &[f64], frame_rate: f64) -> Result<PitchTrack> {
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(FcpeError::Domain(format!(
            "frame rate must be positive, got {frame_rate}"
        )));
    }
    let period = 1.0 / frame_rate;
    let Some((&first, &last)) = times.first().zip(times.last()) else {
        return PitchTrack::uniform(0.0, period, Vec::new(), None);
    };
    let frames = ((last - first) * frame_rate + 1e-6).floor() as usize + 1;
    let out = (0..frames)
        .map(|i| {
            let t = first + i as f64 * period;
            let j = times.partition_point(|&x| x < t);
            let nearest = match (j.checked_sub(1), times.get(j)) {
                (Some(a), Some(&b)) if t - times[a] <= b - t => a,
                (Some(a), None) => a,
                _ => j,
            };
            f0[nearest]
        })
        .collect();
    PitchTrack::uniform(first, period, out, None)
}

/// Reads a label file and resamples it to `frame_rate`.
pub fn ingest_labels(path: impl AsRef<Path>, format: LabelFormat, frame_rate: f64) -> Result<PitchTrack> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FcpeError::file(path, e))?;
    let (times, f0) = parse_labels(&text, format)?;
    labels_to_track(&times, &f0, frame_rate)
}

/// Frame counts behind one accuracy figure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PitchCounts {
    pub voiced: usize,
    pub pitch_hits: usize,
    pub chroma_hits: usize,
}

impl PitchCounts {
    pub fn add(&mut self, other: PitchCounts) {
        self.voiced += other.voiced;
        self.pitch_hits += other.pitch_hits;
        self.chroma_hits += other.chroma_hits;
    }

    fn percent(&self, hits: usize) -> Result<f64> {
        if self.voiced == 0 {
            return Err(FcpeError::UndefinedMetric("reference has no voiced frames".into()));
        }
        Ok(100.0 * hits as f64 / self.voiced as f64)
    }

    pub fn rpa(&self) -> Result<f64> {
        self.percent(self.pitch_hits)
    }

    pub fn rca(&self) -> Result<f64> {
        self.percent(self.chroma_hits)
    }
}

/// Scores every voiced reference frame against the nearest estimate frame.
pub fn pitch_counts(reference: &PitchTrack, estimate: &PitchTrack, tol_cents: f64) -> PitchCounts {
    let mut c = PitchCounts::default();
    for (i, &f_ref) in reference.f0().iter().enumerate() {
        if f_ref <= 0.0 {
            continue;
        }
        c.voiced += 1;
        let f_est = estimate.f0_at(reference.time(i));
        if f_est <= 0.0 {
            continue;
        }
        let err = 1200.0 * (f_est / f_ref).log2();
        if err.abs() <= tol_cents {
            c.pitch_hits += 1;
        }
        let folded = err - 1200.0 * (err / 1200.0).round();
        if folded.abs() <= tol_cents {
            c.chroma_hits += 1;
        }
    }
    c
}

/// Raw pitch accuracy in percent.
pub fn rpa(reference: &PitchTrack, estimate: &PitchTrack, tol_cents: f64) -> Result<f64> {
    pitch_counts(reference, estimate, tol_cents).rpa()
}

/// Raw chroma accuracy in percent (octave errors forgiven).
pub fn rca(reference: &PitchTrack, estimate: &PitchTrack, tol_cents: f64) -> Result<f64> {
    pitch_counts(reference, estimate, tol_cents).rca()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub name: String,
    pub audio: AudioBuffer,
    pub labels: PitchTrack,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub clips: Vec<LabeledClip>,
    /// Files without a partner, reported and skipped.
    pub unpaired: Vec<PathBuf>,
}

/// Pairs every `NAME.wav` in `dir` with `NAME.<label extension>`.
pub fn load_dataset(dir: impl AsRef<Path>, format: LabelFormat, frame_rate: f64) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| FcpeError::file(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| FcpeError::file(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    let ext = format.extension();
    let has_ext = |p: &Path, e: &str| p.extension().is_some_and(|x| x.eq_ignore_ascii_case(e));
    let mut ds = Dataset::default();
    for p in &entries {
        if has_ext(p, "wav") {
            let label = p.with_extension(ext);
            if !label.is_file() {
                ds.unpaired.push(p.clone());
                continue;
            }
            ds.clips.push(LabeledClip {
                name: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                audio: load_wav(p)?,
                labels: ingest_labels(&label, format, frame_rate)?,
            });
        } else if has_ext(p, ext) && !p.with_extension("wav").is_file() {
            ds.unpaired.push(p.clone());
        }
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    /// Generated `1/f^beta` noise under a display name.
    Colored { name: String, beta: f64 },
    /// A recorded noise clip, tiled and offset per draw.
    Recording { name: String, audio: AudioBuffer },
}

impl NoiseSource {
    /// `white`, `pink`, `brownian`, `violet` or `file:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Self::Recording {
                name: format!(
                    "file:{}",
                    Path::new(path).file_name().unwrap_or_default().to_string_lossy()
                ),
                audio: load_wav(path)?,
            });
        }
        let beta = beta_for_name(s).ok_or_else(|| {
            FcpeError::Config(format!(
                "unknown noise {s:?} (expected white, pink, brownian, violet or file:PATH)"
            ))
        })?;
        Ok(Self::Colored {
            name: s.to_string(),
            beta,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Colored { name, .. } | Self::Recording { name, .. } => name,
        }
    }

    /// Noise of `len` samples at `sample_rate`, deterministic per seed.
    pub fn draw(&self, len: usize, sample_rate: u32, seed: u64) -> Result<AudioBuffer> {
        match self {
            Self::Colored { beta, .. } => gen_colored_noise(&NoiseSpec::new(*beta, seed, len.max(1), sample_rate)?),
            Self::Recording { audio, .. } => {
                let src = resample(audio, sample_rate)?;
                if src.is_empty() {
                    return Err(FcpeError::Degenerate(format!(
                        "noise recording {} is empty",
                        self.name()
                    )));
                }
                let offset = ChaCha8Rng::seed_from_u64(seed).random_range(0..src.len());
                let samples = src.samples().iter().cycle().skip(offset).take(len).copied().collect();
                AudioBuffer::new(samples, sample_rate)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Clean,
    Noisy { noise: NoiseSource, snr_db: f64 },
}

impl Condition {
    pub fn noise_kind(&self) -> &str {
        match self {
            Self::Clean => "clean",
            Self::Noisy { noise, .. } => noise.name(),
        }
    }

    pub fn snr_db(&self) -> f64 {
        match self {
            Self::Clean => f64::INFINITY,
            Self::Noisy { snr_db, .. } => *snr_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedLabel {
    Index(u64),
    Avg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub noise_kind: String,
    pub snr_db: f64,
    pub seed: SeedLabel,
    pub rpa: f64,
    pub rca: f64,
    pub n_frames: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub dataset: String,
    pub model_hash: String,
    pub seeds: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub provenance: Provenance,
    pub skipped: Vec<PathBuf>,
    /// Per-file noise mixes performed.
    pub corruption_passes: usize,
}

fn fmt_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

impl EvalReport {
    pub fn averages(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.seed == SeedLabel::Avg)
    }

    /// CSV with `#` comment lines first; `generated` is written verbatim into
    /// its own line so reruns differ only there.
    pub fn to_csv(&self, generated: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(g) = generated {
            let _ = writeln!(s, "# generated {g}");
        }
        let p = &self.provenance;
        let _ = writeln!(s, "# dataset {}", p.dataset);
        let _ = writeln!(s, "# model_sha256 {}", p.model_hash);
        let _ = writeln!(s, "# seeds {}", p.seeds);
        let _ = writeln!(s, "# skipped {}", self.skipped.len());
        for path in &self.skipped {
            let _ = writeln!(s, "# skipped_file {}", path.display());
        }
        s.push_str("noise_kind,snr_db,seed,rpa,rca,n_frames\n");
        for r in &self.rows {
            let seed = match r.seed {
                SeedLabel::Index(i) => i.to_string(),
                SeedLabel::Avg => "avg".into(),
            };
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.4},{}",
                r.noise_kind,
                fmt_snr(r.snr_db),
                seed,
                r.rpa,
                r.rca,
                r.n_frames
            );
        }
        s
    }

    /// Aligned text: one row per noise kind, one column per SNR, cells `RPA / RCA`.
    pub fn to_table(&self) -> String {
        let mut kinds: Vec<&str> = Vec::new();
        let mut snrs: Vec<f64> = Vec::new();
        for r in self.averages() {
            if !kinds.contains(&r.noise_kind.as_str()) {
                kinds.push(&r.noise_kind);
            }
            if !snrs.contains(&r.snr_db) {
                snrs.push(r.snr_db);
            }
        }
        snrs.sort_by(|a, b| b.total_cmp(a));
        let header: Vec<String> = snrs
            .iter()
            .map(|&s| {
                if s.is_infinite() {
                    "Clean".into()
                } else {
                    format!("{} dB", fmt_snr(s))
                }
            })
            .collect();
        let cell = |k: &str, s: f64| {
            self.averages()
                .find(|r| r.noise_kind == k && r.snr_db == s)
                .map_or("-".to_string(), |r| format!("{:.2} / {:.2}", r.rpa, r.rca))
        };
        let kw = kinds.iter().map(|k| k.len()).max().unwrap_or(0).max("noise".len());
        let cw = 17usize.max(header.iter().map(|h| h.len()).max().unwrap_or(0));
        let mut out = format!("{:<kw$}", "noise");
        for h in &header {
            let _ = write!(out, " | {h:>cw$}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(kw + header.len() * (cw + 3)));
        out.push('\n');
        for k in &kinds {
            let _ = write!(out, "{k:<kw$}");
            for &s in &snrs {
                let _ = write!(out, " | {:>cw$}", cell(k, s));
            }
            out.push('\n');
        }
        out.push_str("cells: RPA / RCA (%), averaged over seeds\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub seeds: u64,
    pub tol_cents: f64,
    /// Base of every per-draw noise seed.
    pub base_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            seeds: 5,
            tol_cents: DEFAULT_TOL_CENTS,
            base_seed: 0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_seed(base: u64, condition: usize, seed: u64, file: usize) -> u64 {
    splitmix(splitmix(splitmix(base ^ condition as u64) ^ seed) ^ file as u64)
}

/// Evaluates `estimator` on every clip under every condition, `seeds` noise
/// draws per noisy condition. Frames are pooled across clips per draw; the
/// `avg` row is the mean over draws. Clean audio is evaluated once.
pub fn eval_matrix(
    estimator: &dyn PitchEstimator,
    dataset: &Dataset,
    conditions: &[Condition],
    opts: &EvalOptions,
    provenance: Provenance,
) -> Result<EvalReport> {
    if opts.seeds == 0 {
        return Err(FcpeError::Config("seeds must be at least 1".into()));
    }
    let passes = AtomicUsize::new(0);
    let mut jobs = Vec::new();
    for (ci, cond) in conditions.iter().enumerate() {
        let draws = if matches!(cond, Condition::Clean) {
            1
        } else {
            opts.seeds
        };
        for s in 0..draws {
            for fi in 0..dataset.clips.len() {
                jobs.push((ci, s, fi));
            }
        }
    }
    let run = |&(ci, s, fi): &(usize, u64, usize)| -> Result<PitchCounts> {
        let clip = &dataset.clips[fi];
        let est = match &conditions[ci] {
            Condition::Clean => estimator.estimate(&clip.audio)?,
            Condition::Noisy { noise, snr_db } => {
                let seed = draw_seed(opts.base_seed, ci, s, fi);
                let n = noise.draw(clip.audio.len(), clip.audio.sample_rate(), seed)?;
                let mixed = mix_at_snr(&clip.audio, &n, *snr_db)?;
                passes.fetch_add(1, Ordering::Relaxed);
                estimator.estimate(&mixed.audio)?
            }
        };
        Ok(pitch_counts(&clip.labels, &est, opts.tol_cents))
    };
    #[cfg(feature = "parallel")]
    let counts: Vec<PitchCounts> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let counts: Vec<PitchCounts> = jobs.iter().map(run).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut k = 0;
    for (ci, cond) in conditions.iter().enumerate() {
        let draws = if matches!(cond, Condition::Clean) {
            1
        } else {
            opts.seeds
        };
        let mut seed_rows = Vec::new();
        for s in 0..draws {
            let mut total = PitchCounts::default();
            for _ in 0..dataset.clips.len() {
                debug_assert_eq!(jobs[k].0, ci);
                total.add(counts[k]);
                k += 1;
            }
            seed_rows.push(ReportRow {
                noise_kind: cond.noise_kind().to_string(),
                snr_db: cond.snr_db(),
                seed: SeedLabel::Index(s),
                rpa: total.rpa()?,
                rca: total.rca()?,
                n_frames: total.voiced,
            });
        }
        let n = seed_rows.len() as f64;
        let avg = ReportRow {
            seed: SeedLabel::Avg,
            rpa: seed_rows.iter().map(|r| r.rpa).sum::<f64>() / n,
            rca: seed_rows.iter().map(|r| r.rca).sum::<f64>() / n,
            ..seed_rows[0].clone()
        };
        rows.extend(seed_rows);
        rows.push(avg);
    }
    Ok(EvalReport {
        rows,
        provenance,
        skipped: dataset.unpaired.clone(),
        corruption_passes: passes.into_inner(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtfReport {
    pub rtf: f64,
    /// Median processing time in seconds.
    pub t_process: f64,
    pub t_audio: f64,
}

/// Real-time factor: median processing time over `reps` timed runs divided by
/// the audio duration. `warmup` runs are discarded.
pub fn measure_rtf(
    estimator: &dyn PitchEstimator,
    audio: &AudioBuffer,
    warmup: usize,
    reps: usize,
) -> Result<RtfReport> {
    let t_audio = audio.duration();
    if t_audio < 1.0 {
        return Err(FcpeError::Domain(format!(
            "benchmark audio must last at least 1 s, got {t_audio} s"
        )));
    }
    if reps == 0 {
        return Err(FcpeError::Config("reps must be at least 1".into()));
    }
    for _ in 0..warmup {
        estimator.estimate(audio)?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        estimator.estimate(audio)?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = reps / 2;
    let t_process = if reps % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    };
    Ok(RtfReport {
        rtf: t_process / t_audio,
        t_process,
        t_audio,
    })
}
