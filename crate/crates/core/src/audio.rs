//! Mono audio buffers, WAV I/O and band-limited resampling.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{FcpeError, Result};

/// Number of sinc zero crossings on each side of the interpolation point,
/// measured at the lower of the two rates (64 taps per output phase).
const SINC_HALF_TAPS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(FcpeError::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(FcpeError::Domain(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square of the samples (0 for an empty buffer).
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }
}

pub(crate) fn mean_square(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64
}

/// Reads a RIFF/WAVE file (PCM 16-bit or IEEE float32, any channel count).
/// Multi-channel audio is downmixed by averaging; PCM is scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FcpeError::file(path, e))?;
    read_wav(BufReader::new(file)).map_err(|e| match e {
        FcpeError::Io(io) => FcpeError::file(path, io),
        other => other,
    })
}

pub fn read_wav<R: Read>(reader: R) -> Result<AudioBuffer> {
    let mut wav = hound::WavReader::new(reader).map_err(wav_error)?;
    let spec = wav.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(FcpeError::Format {
            chunk: "fmt ".into(),
            message: "zero channels".into(),
        });
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => wav
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (hound::SampleFormat::Float, 32) => wav
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (fmt, bits) => {
            return Err(FcpeError::Format {
                chunk: "fmt ".into(),
                message: format!("unsupported codec {fmt:?} with {bits} bits per sample"),
            })
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(FcpeError::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "data chunk ends mid-frame",
        )));
    }
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|f| f.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    AudioBuffer::new(mono, spec.sample_rate)
}

fn wav_error(e: hound::Error) -> FcpeError {
    match e {
        hound::Error::IoError(io) => FcpeError::Io(io),
        hound::Error::Unsupported => FcpeError::Format {
            chunk: "fmt ".into(),
            message: "unsupported WAVE encoding".into(),
        },
        hound::Error::FormatError(msg) => FcpeError::Format {
            chunk: "RIFF".into(),
            message: msg.into(),
        },
        other => FcpeError::Format {
            chunk: "data".into(),
            message: other.to_string(),
        },
    }
}

/// Writes a mono IEEE float32 WAV file.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => FcpeError::file(path, io),
        other => FcpeError::Format {
            chunk: "data".into(),
            message: other.to_string(),
        },
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in &audio.samples {
        w.write_sample(s).map_err(to_err)?;
    }
    w.finalize().map_err(to_err)
}

/// Writes a mono 16-bit PCM WAV file, clipping to [-1, 1).
pub fn write_wav_pcm16(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => FcpeError::file(path, io),
        other => FcpeError::Format {
            chunk: "data".into(),
            message: other.to_string(),
        },
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in &audio.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(to_err)?;
    }
    w.finalize().map_err(to_err)
}

/// Band-limited resampling to `target_rate`. Output length is
/// `round(len * target / source)`; equal rates return the input unchanged.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(FcpeError::Config("target sample rate must be positive".into()));
    }
    if target_rate == buf.sample_rate {
        return Ok(buf.clone());
    }
    let ratio = target_rate as f64 / buf.sample_rate as f64;
    let out_len = (buf.len() as f64 * ratio).round() as usize;
    let samples = resample_by_step(&buf.samples, 1.0 / ratio, out_len);
    AudioBuffer::new(samples, target_rate)
}

/// Windowed-sinc interpolation: output sample `n` is the band-limited value of
/// the input at position `n * step`. The cutoff follows the lower rate, so
/// `step > 1` (decimation) also low-passes.
pub(crate) fn resample_by_step(input: &[f32], step: f64, out_len: usize) -> Vec<f32> {
    if input.is_empty() {
        return vec![0.0; out_len];
    }
    let cutoff = (1.0 / step).min(1.0);
    let half_width = SINC_HALF_TAPS as f64 / cutoff;
    let reach = half_width.ceil() as isize;
    let last = input.len() as isize - 1;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n as f64 * step;
        let center = pos.floor() as isize;
        let (mut acc, mut wsum) = (0.0f64, 0.0f64);
        for k in (center - reach + 1)..=(center + reach) {
            if k < 0 || k > last {
                continue;
            }
            let x = k as f64 - pos;
            if x.abs() >= half_width {
                continue;
            }
            let w = cutoff * sinc(cutoff * x) * blackman(x / half_width);
            acc += w * input[k as usize] as f64;
            wsum += w;
        }
        out.push(if wsum.abs() > 1e-12 { (acc / wsum) as f32 } else { 0.0 });
    }
    out
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Blackman window on `u` in (-1, 1), peak 1 at 0.
#[inline]
fn blackman(u: f64) -> f64 {
    0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos()
}
