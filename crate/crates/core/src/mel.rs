//! Log-mel spectrogram frontend.
//!
//! Centered STFT frames (reflect padding), periodic Hann window, magnitude
//! spectrum, HTK triangular filterbank, natural log with a floor.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::Fft;

use crate::audio::AudioBuffer;
use crate::dsp::{forward_plan, hann_periodic};
use crate::error::{FcpeError, Result};

/// Mel bins the network expects.
pub const MODEL_MELS: usize = 128;
pub const MEL_DUMP_MAGIC: &[u8; 4] = b"MEL0";

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_fft: 1024,
            hop: 160,
            n_mels: MODEL_MELS,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FcpeError::Config(m));
        if self.sample_rate == 0 || self.n_fft < 2 || self.hop == 0 {
            return bad(format!(
                "sample_rate, n_fft and hop must be positive ({}, {}, {})",
                self.sample_rate, self.n_fft, self.hop
            ));
        }
        if self.hop > self.n_fft {
            return bad(format!("hop {} exceeds n_fft {}", self.hop, self.n_fft));
        }
        if self.n_mels != MODEL_MELS {
            return bad(format!(
                "n_mels must be {MODEL_MELS} for the model input, got {}",
                self.n_mels
            ));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max) {
            return bad(format!("need 0 <= f_min < f_max ({}, {})", self.f_min, self.f_max));
        }
        if self.f_max > self.sample_rate as f64 / 2.0 {
            return bad(format!(
                "f_max {} above Nyquist {}",
                self.f_max,
                self.sample_rate as f64 / 2.0
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad(format!("log_floor must be positive, got {}", self.log_floor));
        }
        Ok(())
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn frame_period(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    /// Frames produced for `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn floor_value(&self) -> f32 {
        self.log_floor.ln() as f32
    }

    /// Key/value form stored in weight archive metadata.
    pub fn to_metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("mel.sample_rate".into(), self.sample_rate.to_string());
        m.insert("mel.n_fft".into(), self.n_fft.to_string());
        m.insert("mel.hop".into(), self.hop.to_string());
        m.insert("mel.n_mels".into(), self.n_mels.to_string());
        m.insert("mel.f_min".into(), self.f_min.to_string());
        m.insert("mel.f_max".into(), self.f_max.to_string());
        m.insert("mel.log_floor".into(), self.log_floor.to_string());
        m.insert("mel.scale".into(), "htk".into());
        m.insert("mel.spectrum".into(), "magnitude".into());
        m.insert("mel.log".into(), "ln".into());
        m
    }

    /// Reads a config from metadata; absent keys keep their defaults. Only the
    /// HTK / magnitude / natural-log convention is implemented.
    pub fn from_metadata(meta: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, expect) in [("mel.scale", "htk"), ("mel.spectrum", "magnitude"), ("mel.log", "ln")] {
            if let Some(v) = meta.get(key) {
                if v != expect {
                    return Err(FcpeError::Config(format!(
                        "unsupported mel convention {key}={v} (only {expect})"
                    )));
                }
            }
        }
        fn parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str, slot: &mut T) -> Result<()> {
            if let Some(v) = meta.get(key) {
                *slot = v
                    .parse()
                    .map_err(|_| FcpeError::Config(format!("bad metadata value {key}={v}")))?;
            }
            Ok(())
        }
        parse(meta, "mel.sample_rate", &mut cfg.sample_rate)?;
        parse(meta, "mel.n_fft", &mut cfg.n_fft)?;
        parse(meta, "mel.hop", &mut cfg.hop)?;
        parse(meta, "mel.n_mels", &mut cfg.n_mels)?;
        parse(meta, "mel.f_min", &mut cfg.f_min)?;
        parse(meta, "mel.f_max", &mut cfg.f_max)?;
        parse(meta, "mel.log_floor", &mut cfg.log_floor)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn hz_to_mel_htk(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz_htk(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK filterbank, one sparse row per mel band.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    n_freqs: usize,
    rows: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, n_fft: usize, n_mels: usize, f_min: f64, f_max: f64) -> Self {
        let n_freqs = n_fft / 2 + 1;
        let m_lo = hz_to_mel_htk(f_min);
        let m_hi = hz_to_mel_htk(f_max);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz_htk(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let rows = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_freqs)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f < mid {
                            (f - lo) / (mid - lo)
                        } else if f >= mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match weights.first() {
                    Some(&(start, _)) => (start, weights.iter().map(|w| w.1).collect()),
                    None => (0, Vec::new()),
                }
            })
            .collect();
        Self {
            n_freqs,
            rows,
            centers_hz: edges[1..=n_mels].to_vec(),
        }
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn n_freqs(&self) -> usize {
        self.n_freqs
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense row `m` over all FFT bins.
    pub fn dense_row(&self, m: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n_freqs];
        let (start, w) = &self.rows[m];
        row[*start..start + w.len()].copy_from_slice(w);
        row
    }

    fn apply(&self, mag: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&mag[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// `frames x n_mels` log-magnitude mel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    frames: usize,
    n_mels: usize,
    data: Vec<f32>,
    config: MelConfig,
}

impl MelSpectrogram {
    pub fn new(frames: usize, n_mels: usize, data: Vec<f32>, config: MelConfig) -> Result<Self> {
        if data.len() != frames * n_mels {
            return Err(FcpeError::Shape(format!(
                "mel data has {} values, expected {frames}x{n_mels}",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            n_mels,
            data,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn frame_rate(&self) -> f64 {
        self.config.frame_rate()
    }

    /// Writes the MEL0 debug dump: `"MEL0"`, u32 frames, u32 columns, u32
    /// reserved (0), then row-major little-endian f32.
    pub fn write_dump<W: Write>(&self, w: W) -> Result<()> {
        write_matrix_dump(w, self.frames, self.n_mels, &self.data)
    }
}

pub fn write_matrix_dump<W: Write>(mut w: W, rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(FcpeError::Shape(format!(
            "dump data has {} values, expected {rows}x{cols}",
            data.len()
        )));
    }
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| FcpeError::Shape(format!("dimension {v} exceeds u32")));
    w.write_all(MEL_DUMP_MAGIC)?;
    w.write_all(&to_u32(rows)?.to_le_bytes())?;
    w.write_all(&to_u32(cols)?.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a MEL0 dump as `(rows, cols, data)`.
pub fn read_matrix_dump<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f32>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != MEL_DUMP_MAGIC {
        return Err(FcpeError::Format {
            chunk: "MEL0 header".into(),
            message: "bad magic".into(),
        });
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n_bytes = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FcpeError::Format {
            chunk: "MEL0 header".into(),
            message: format!("{rows}x{cols} overflows"),
        })?;
    let mut bytes = Vec::new();
    r.take(n_bytes as u64).read_to_end(&mut bytes)?;
    if bytes.len() != n_bytes {
        return Err(FcpeError::Format {
            chunk: "MEL0 data".into(),
            message: format!("expected {n_bytes} bytes, found {}", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}

/// Precomputed window, FFT plan and filterbank for one [`MelConfig`].
/// Immutable and shareable across threads.
#[derive(Clone)]
pub struct MelFrontend {
    config: MelConfig,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontend").field("config", &self.config).finish()
    }
}

impl MelFrontend {
    pub fn new(config: MelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            window: hann_periodic(config.n_fft),
            filterbank: MelFilterbank::new(
                config.sample_rate,
                config.n_fft,
                config.n_mels,
                config.f_min,
                config.f_max,
            ),
            fft: forward_plan(config.n_fft),
            config,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn compute(&self, buf: &AudioBuffer) -> Result<MelSpectrogram> {
        let cfg = &self.config;
        if buf.sample_rate() != cfg.sample_rate {
            return Err(FcpeError::Config(format!(
                "audio is {} Hz but the frontend expects {} Hz",
                buf.sample_rate(),
                cfg.sample_rate
            )));
        }
        let x = buf.samples();
        let frames = cfg.frames_for(x.len());
        let n_fft = cfg.n_fft;
        let half = (n_fft / 2) as isize;
        let n_freqs = n_fft / 2 + 1;
        let floor = cfg.log_floor;
        let mut data = vec![0f32; frames * cfg.n_mels];
        let mut buf_c = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0; n_freqs];
        let mut mel = vec![0.0; cfg.n_mels];
        for t in 0..frames {
            let start = (t * cfg.hop) as isize - half;
            for (i, slot) in buf_c.iter_mut().enumerate() {
                let s = reflect_sample(x, start + i as isize);
                *slot = Complex::new(s * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf_c, &mut scratch);
            for (m, c) in mag.iter_mut().zip(&buf_c) {
                *m = c.norm();
            }
            self.filterbank.apply(&mag, &mut mel);
            for (o, &v) in data[t * cfg.n_mels..(t + 1) * cfg.n_mels].iter_mut().zip(&mel) {
                *o = v.max(floor).ln() as f32;
            }
        }
        MelSpectrogram::new(frames, cfg.n_mels, data, cfg.clone())
    }
}

/// Sample `i` of `x` extended by mirror reflection about both ends
/// (`x[-1] = x[1]`), repeated as often as needed for short signals.
fn reflect_sample(x: &[f32], i: isize) -> f64 {
    let n = x.len() as isize;
    match n {
        0 => 0.0,
        1 => x[0] as f64,
        _ => {
            let period = 2 * (n - 1);
            let mut j = i.rem_euclid(period);
            if j >= n {
                j = period - j;
            }
            x[j as usize] as f64
        }
    }
}

/// One-shot log-mel; builds a [`MelFrontend`] for `cfg`.
pub fn log_mel(buf: &AudioBuffer, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelFrontend::new(cfg.clone())?.compute(buf)
}
