//! Small spectral-analysis helpers shared by the frontend, the noise
//! generator and the tests.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

/// Magnitude spectrum (bins `0..=n/2`) of a Hann-windowed, zero-padded copy of `x`.
pub fn magnitude_spectrum(x: &[f32], n_fft: usize) -> Vec<f64> {
    let win = hann_periodic(x.len().min(n_fft));
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n_fft];
    for (i, (&s, &w)) in x.iter().zip(&win).enumerate() {
        buf[i] = Complex::new(s as f64 * w, 0.0);
    }
    forward_plan(n_fft).process(&mut buf);
    buf[..=n_fft / 2].iter().map(|c| c.norm()).collect()
}

/// Frequency of the strongest spectral peak, refined by parabolic
/// interpolation of the log magnitude. DC is ignored.
pub fn dominant_frequency(x: &[f32], sample_rate: u32) -> f64 {
    let n_fft = x.len().next_power_of_two().max(4) * 2;
    let mag = magnitude_spectrum(x, n_fft);
    let k = (1..mag.len() - 1)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .unwrap_or(1);
    let (a, b, c) = (
        mag[k - 1].max(1e-300).ln(),
        mag[k].max(1e-300).ln(),
        mag[k + 1].max(1e-300).ln(),
    );
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 1e-18 {
        0.5 * (a - c) / denom
    } else {
        0.0
    };
    (k as f64 + delta) * sample_rate as f64 / n_fft as f64
}

/// Welch power spectral density estimate: Hann segments of `seg_len` with 50%
/// overlap, averaged periodograms. Returns `(frequencies, psd)` for bins
/// `0..=seg_len/2`.
pub fn welch_psd(x: &[f32], sample_rate: u32, seg_len: usize) -> (Vec<f64>, Vec<f64>) {
    let hop = seg_len / 2;
    let win = hann_periodic(seg_len);
    let win_power: f64 = win.iter().map(|w| w * w).sum();
    let plan = forward_plan(seg_len);
    let n_bins = seg_len / 2 + 1;
    let mut psd = vec![0.0; n_bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); seg_len];
    let mut start = 0;
    while start + seg_len <= x.len() {
        for i in 0..seg_len {
            buf[i] = Complex::new(x[start + i] as f64 * win[i], 0.0);
        }
        plan.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (segments.max(1) as f64 * win_power * sample_rate as f64);
    psd.iter_mut().for_each(|p| *p *= scale);
    let freqs = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / seg_len as f64)
        .collect();
    (freqs, psd)
}

/// Least-squares slope of `10 log10(psd)` against `log10(f)` over
/// `[f_lo, f_hi]`, in dB per decade.
pub fn psd_slope_db_per_decade(freqs: &[f64], psd: &[f64], f_lo: f64, f_hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(psd)
        .filter(|(f, p)| **f >= f_lo && **f <= f_hi && **p > 0.0)
        .map(|(f, p)| (f.log10(), 10.0 * p.log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
