//! Corruptions: colored noise, SNR-controlled mixing, key shifting and
//! spectrogram masking. Every random operation takes an explicit seed.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{mean_square, resample_by_step, AudioBuffer};
use crate::error::{FcpeError, Result};
use crate::mel::MelSpectrogram;

/// Named spectral exponents: PSD proportional to `1 / f^beta`.
pub const NAMED_NOISE: [(&str, f64); 4] = [("violet", -1.0), ("white", 0.0), ("pink", 1.0), ("brownian", 2.0)];

/// Spectral exponent for a noise color name.
pub fn beta_for_name(name: &str) -> Option<f64> {
    NAMED_NOISE.iter().find(|(n, _)| *n == name).map(|&(_, b)| b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub beta: f64,
    pub seed: u64,
    pub length: usize,
    pub sample_rate: u32,
}

impl NoiseSpec {
    pub fn new(beta: f64, seed: u64, length: usize, sample_rate: u32) -> Result<Self> {
        let spec = Self {
            beta,
            seed,
            length,
            sample_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.sample_rate == 0 {
            return Err(FcpeError::Config(format!(
                "noise length and sample rate must be positive ({}, {})",
                self.length, self.sample_rate
            )));
        }
        if !self.beta.is_finite() {
            return Err(FcpeError::Config(format!(
                "noise beta must be finite, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Gaussian noise with power spectrum proportional to `1 / f^beta`, unit RMS.
pub fn gen_colored_noise(spec: &NoiseSpec) -> Result<AudioBuffer> {
    spec.validate()?;
    let n = spec.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    if n == 1 {
        let s = if buf[0].re < 0.0 { -1.0 } else { 1.0 };
        return AudioBuffer::new(vec![s], spec.sample_rate);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = spec.sample_rate as f64 / n as f64;
    buf[0] = Complex::new(0.0, 0.0);
    for (k, c) in buf.iter_mut().enumerate().skip(1) {
        let f = k.min(n - k) as f64 * df;
        *c *= f.powf(-spec.beta / 2.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let rms = (buf.iter().map(|c| c.re * c.re).sum::<f64>() / n as f64).sqrt();
    let samples = buf.iter().map(|c| (c.re / rms) as f32).collect();
    AudioBuffer::new(samples, spec.sample_rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub audio: AudioBuffer,
    /// Factor applied to the noise.
    pub gain: f64,
    /// True when the noise was shorter than the signal and had to be repeated.
    pub tiled: bool,
}

/// Adds `gain * noise` to `signal` so that the signal-to-noise power ratio
/// over the signal's extent equals `snr_db`.
pub fn mix_at_snr(signal: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<Mix> {
    if signal.sample_rate() != noise.sample_rate() {
        return Err(FcpeError::Config(format!(
            "signal is {} Hz but noise is {} Hz",
            signal.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !snr_db.is_finite() {
        return Err(FcpeError::Domain(format!("SNR must be finite, got {snr_db}")));
    }
    if noise.is_empty() {
        return Err(FcpeError::Degenerate("noise buffer is empty".into()));
    }
    let p_signal = signal.power();
    if p_signal == 0.0 {
        return Err(FcpeError::Degenerate("signal has zero power".into()));
    }
    let tiled = noise.len() < signal.len();
    let extent: Vec<f32> = noise.samples().iter().cycle().take(signal.len()).copied().collect();
    let p_noise = mean_square(&extent);
    if p_noise == 0.0 {
        return Err(FcpeError::Degenerate(
            "noise has zero power over the signal extent".into(),
        ));
    }
    let gain = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mixed = signal
        .samples()
        .iter()
        .zip(&extent)
        .map(|(&s, &v)| (s as f64 + gain * v as f64) as f32)
        .collect();
    Ok(Mix {
        audio: AudioBuffer::new(mixed, signal.sample_rate())?,
        gain,
        tiled,
    })
}

/// Raises pitch by `semitones` by resampling and replaying at the original
/// rate. Returns the shifted audio and the pitch ratio for rescaling labels.
pub fn key_shift(buf: &AudioBuffer, semitones: f64) -> Result<(AudioBuffer, f64)> {
    if !(-12.0..=12.0).contains(&semitones) {
        return Err(FcpeError::Domain(format!(
            "key shift must be within ±12 semitones, got {semitones}"
        )));
    }
    if semitones == 0.0 {
        return Ok((buf.clone(), 1.0));
    }
    let ratio = (semitones / 12.0).exp2();
    let out_len = (buf.len() as f64 / ratio).round() as usize;
    let samples = resample_by_step(buf.samples(), ratio, out_len);
    Ok((AudioBuffer::new(samples, buf.sample_rate())?, ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Blank,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub max_time_frac: f64,
    pub max_freq_frac: f64,
    pub n_masks: usize,
    pub gaussian_std: f64,
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            kind: MaskKind::Blank,
            max_time_frac: 0.1,
            max_freq_frac: 0.15,
            n_masks: 2,
            gaussian_std: 1.0,
            seed: 0,
        }
    }
}

/// A stripe of a spectrogram: a range of frames or a range of mel bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskRegion {
    Time(Range<usize>),
    Freq(Range<usize>),
}

impl MaskRegion {
    pub fn contains(&self, frame: usize, bin: usize) -> bool {
        match self {
            MaskRegion::Time(r) => r.contains(&frame),
            MaskRegion::Freq(r) => r.contains(&bin),
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.max_time_frac) || !frac_ok(self.max_freq_frac) {
            return Err(FcpeError::Config(format!(
                "mask fractions must be in [0, 1] ({}, {})",
                self.max_time_frac, self.max_freq_frac
            )));
        }
        if !(self.gaussian_std >= 0.0 && self.gaussian_std.is_finite()) {
            return Err(FcpeError::Config(format!(
                "gaussian_std must be finite and non-negative, got {}",
                self.gaussian_std
            )));
        }
        Ok(())
    }

    /// `n_masks` time stripes then `n_masks` frequency stripes; widths are
    /// uniform in `0..=floor(max_frac * size)`.
    pub fn draw_regions(&self, frames: usize, n_mels: usize, rng: &mut impl Rng) -> Vec<MaskRegion> {
        let mut stripe = |size: usize, frac: f64| {
            let max_w = (frac * size as f64).floor() as usize;
            let w = rng.random_range(0..=max_w);
            let start = rng.random_range(0..=size - w);
            start..start + w
        };
        let mut out: Vec<MaskRegion> = (0..self.n_masks)
            .map(|_| MaskRegion::Time(stripe(frames, self.max_time_frac)))
            .collect();
        out.extend((0..self.n_masks).map(|_| MaskRegion::Freq(stripe(n_mels, self.max_freq_frac))));
        out
    }
}

/// Applies masks to explicit regions. Blank sets cells to the log floor;
/// Gaussian adds independent `N(0, std)` draws to each covered cell.
pub fn apply_masks(
    mel: &MelSpectrogram,
    regions: &[MaskRegion],
    kind: MaskKind,
    gaussian_std: f64,
    rng: &mut impl Rng,
) -> Result<MelSpectrogram> {
    let (frames, bins) = (mel.frames(), mel.n_mels());
    let mut out = mel.clone();
    let floor = mel.config().floor_value();
    let normal = Normal::new(0.0, gaussian_std).map_err(|e| FcpeError::Config(e.to_string()))?;
    let data = out.as_mut_slice();
    for region in regions {
        let (ts, fs) = match region {
            MaskRegion::Time(r) => (r.start.min(frames)..r.end.min(frames), 0..bins),
            MaskRegion::Freq(r) => (0..frames, r.start.min(bins)..r.end.min(bins)),
        };
        for t in ts {
            for f in fs.clone() {
                let cell = &mut data[t * bins + f];
                match kind {
                    MaskKind::Blank => *cell = floor,
                    MaskKind::Gaussian => *cell += normal.sample(rng) as f32,
                }
            }
        }
    }
    Ok(out)
}

/// Random time and frequency stripe masking, deterministic per seed.
pub fn spec_mask(mel: &MelSpectrogram, spec: &MaskSpec) -> Result<MelSpectrogram> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let regions = spec.draw_regions(mel.frames(), mel.n_mels(), &mut rng);
    apply_masks(mel, &regions, spec.kind, spec.gaussian_std, &mut rng)
}
