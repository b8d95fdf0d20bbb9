//! Browser demo for the `fcpe` toolkit: pitch-grid targets, colored-noise
//! spectra and log-mel spectrograms of noisy tones. The plain functions are
//! testable natively; the `wasm` module wraps them for JavaScript.

use fcpe::augment::{gen_colored_noise, mix_at_snr, NoiseSpec};
use fcpe::dsp::{psd_slope_db_per_decade, welch_psd};
use fcpe::mel::{MelConfig, MelFrontend};
use fcpe::pitch::{cents_from_hz, decode_frame, make_target, PitchGrid, VOICING_THRESHOLD};
use fcpe::train::harmonic_tone;
use fcpe::Result;

pub const SAMPLE_RATE: u32 = 16000;
const NOISE_LEN: usize = 1 << 15;
const PSD_SEGMENT: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetView {
    pub cents: f64,
    pub nearest_bin: usize,
    /// Frequency recovered by decoding the target vector itself.
    pub decoded_hz: f64,
    pub target: Vec<f32>,
}

pub fn target_view(hz: f64) -> Result<TargetView> {
    let grid = PitchGrid::default();
    let cents = cents_from_hz(hz)?;
    let target = make_target(hz, &grid)?.into_inner();
    let decoded = decode_frame(&target, &grid, VOICING_THRESHOLD)?;
    Ok(TargetView {
        cents,
        nearest_bin: grid.nearest_bin(cents),
        decoded_hz: decoded.f0_hz,
        target: target.iter().map(|&v| v as f32).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin frequencies in Hz, DC excluded.
    pub freqs: Vec<f32>,
    /// Power spectral density in dB.
    pub db: Vec<f32>,
    /// Fitted slope over 50 Hz to 6 kHz in dB per decade.
    pub slope: f64,
}

pub fn noise_spectrum(beta: f64, seed: u64) -> Result<Spectrum> {
    let noise = gen_colored_noise(&NoiseSpec::new(beta, seed, NOISE_LEN, SAMPLE_RATE)?)?;
    let (freqs, psd) = welch_psd(noise.samples(), SAMPLE_RATE, PSD_SEGMENT);
    let slope = psd_slope_db_per_decade(&freqs, &psd, 50.0, 6000.0);
    Ok(Spectrum {
        freqs: freqs[1..].iter().map(|&f| f as f32).collect(),
        db: psd[1..].iter().map(|&p| (10.0 * p.max(1e-30).log10()) as f32).collect(),
        slope,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelView {
    pub frames: usize,
    pub n_mels: usize,
    /// Row-major `frames x n_mels` natural-log magnitudes.
    pub data: Vec<f32>,
    pub measured_snr_db: f64,
}

/// One second of a harmonic tone at `f0_hz` mixed with colored noise at
/// `snr_db`, as a log-mel spectrogram.
pub fn noisy_mel(f0_hz: f64, snr_db: f64, beta: f64, seed: u64) -> Result<MelView> {
    let tone = harmonic_tone(&[f0_hz], 1.0, SAMPLE_RATE)?;
    let noise = gen_colored_noise(&NoiseSpec::new(beta, seed, tone.len(), SAMPLE_RATE)?)?;
    let mix = mix_at_snr(&tone, &noise, snr_db)?;
    let (mut p_signal, mut p_noise) = (0.0f64, 0.0f64);
    for (&m, &s) in mix.audio.samples().iter().zip(tone.samples()) {
        p_signal += (s as f64).powi(2);
        p_noise += (m as f64 - s as f64).powi(2);
    }
    let mel = MelFrontend::new(MelConfig::default())?.compute(&mix.audio)?;
    Ok(MelView {
        frames: mel.frames(),
        n_mels: mel.n_mels(),
        data: mel.as_slice().to_vec(),
        measured_snr_db: 10.0 * (p_signal / p_noise).log10(),
    })
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn js(e: fcpe::FcpeError) -> JsError {
        JsError::new(&e.to_string())
    }

    #[wasm_bindgen]
    pub struct TargetView(super::TargetView);

    #[wasm_bindgen]
    impl TargetView {
        #[wasm_bindgen(getter)]
        pub fn cents(&self) -> f64 {
            self.0.cents
        }
        #[wasm_bindgen(getter, js_name = nearestBin)]
        pub fn nearest_bin(&self) -> usize {
            self.0.nearest_bin
        }
        #[wasm_bindgen(getter, js_name = decodedHz)]
        pub fn decoded_hz(&self) -> f64 {
            self.0.decoded_hz
        }
        #[wasm_bindgen(getter)]
        pub fn target(&self) -> Vec<f32> {
            self.0.target.clone()
        }
    }

    #[wasm_bindgen(js_name = targetView)]
    pub fn target_view(hz: f64) -> Result<TargetView, JsError> {
        super::target_view(hz).map(TargetView).map_err(js)
    }

    #[wasm_bindgen]
    pub struct Spectrum(super::Spectrum);

    #[wasm_bindgen]
    impl Spectrum {
        #[wasm_bindgen(getter)]
        pub fn freqs(&self) -> Vec<f32> {
            self.0.freqs.clone()
        }
        #[wasm_bindgen(getter)]
        pub fn db(&self) -> Vec<f32> {
            self.0.db.clone()
        }
        #[wasm_bindgen(getter)]
        pub fn slope(&self) -> f64 {
            self.0.slope
        }
    }

    #[wasm_bindgen(js_name = noiseSpectrum)]
    pub fn noise_spectrum(beta: f64, seed: u32) -> Result<Spectrum, JsError> {
        super::noise_spectrum(beta, seed as u64).map(Spectrum).map_err(js)
    }

    #[wasm_bindgen]
    pub struct MelView(super::MelView);

    #[wasm_bindgen]
    impl MelView {
        #[wasm_bindgen(getter)]
        pub fn frames(&self) -> usize {
            self.0.frames
        }
        #[wasm_bindgen(getter, js_name = nMels)]
        pub fn n_mels(&self) -> usize {
            self.0.n_mels
        }
        #[wasm_bindgen(getter)]
        pub fn data(&self) -> Vec<f32> {
            self.0.data.clone()
        }
        #[wasm_bindgen(getter, js_name = measuredSnrDb)]
        pub fn measured_snr_db(&self) -> f64 {
            self.0.measured_snr_db
        }
    }

    #[wasm_bindgen(js_name = noisyMel)]
    pub fn noisy_mel(f0_hz: f64, snr_db: f64, beta: f64, seed: u32) -> Result<MelView, JsError> {
        super::noisy_mel(f0_hz, snr_db, beta, seed as u64)
            .map(MelView)
            .map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_of_a4_decodes_near_a4() {
        let v = target_view(440.0).unwrap();
        assert_eq!(v.target.len(), 360);
        assert!((v.decoded_hz - 440.0).abs() < 1.0, "{}", v.decoded_hz);
        let peak = (0..360).max_by(|&a, &b| v.target[a].total_cmp(&v.target[b])).unwrap();
        assert_eq!(peak, v.nearest_bin);
    }

    #[test]
    fn target_outside_grid_is_an_error() {
        assert!(target_view(5.0).is_err());
        assert!(target_view(-1.0).is_err());
    }

    #[test]
    fn pink_spectrum_falls_ten_db_per_decade() {
        let s = noise_spectrum(1.0, 3).unwrap();
        assert_eq!(s.freqs.len(), PSD_SEGMENT / 2);
        assert_eq!(s.freqs.len(), s.db.len());
        assert!((s.slope + 10.0).abs() < 1.5, "{}", s.slope);
    }

    #[test]
    fn noisy_mel_shape_and_snr() {
        let m = noisy_mel(220.0, 5.0, 0.0, 1).unwrap();
        assert_eq!((m.frames, m.n_mels), (101, 128));
        assert_eq!(m.data.len(), 101 * 128);
        assert!((m.measured_snr_db - 5.0).abs() < 0.01);
        assert!(noisy_mel(220.0, f64::INFINITY, 0.0, 1).is_err());
    }
}
