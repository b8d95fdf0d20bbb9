//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use fcpe::archive::TensorArchive;
use fcpe::audio::{write_wav_pcm16, AudioBuffer};
use fcpe::mel::{MelConfig, MelFilterbank};
use fcpe::model::{LynxNet, ModelConfig};
use fcpe::pipeline::Pipeline;
use fcpe::pitch::PitchGrid;

pub const STUB_HZ: f64 = 220.0;

pub fn sine(f: f64, amp: f64, seconds: f64, sr: u32) -> AudioBuffer {
    let n = (seconds * sr as f64).round() as usize;
    AudioBuffer::new(
        (0..n)
            .map(|i| (amp * (2.0 * PI * f * i as f64 / sr as f64).sin()) as f32)
            .collect(),
        sr,
    )
    .unwrap()
}

/// Hand-built network that reports 220 Hz when the mel channel nearest
/// 220 Hz carries energy above ln(1) and unvoiced otherwise.
///
/// embed.0 routes that channel `x` to `(x, -x)`, embed.1 folds it back to
/// `silu(x) - silu(-x) = x`, blocks are zero (identity), and the head gives
/// the nearest bin logit `2x` with symmetric neighbours `x - 1`.
pub fn stub_220() -> Pipeline {
    let cfg = ModelConfig::toy(2, 1, 3);
    let mel = MelConfig::default();
    let fb = MelFilterbank::new(mel.sample_rate, mel.n_fft, mel.n_mels, mel.f_min, mel.f_max);
    let channel = (0..mel.n_mels)
        .min_by(|&a, &b| {
            (fb.centers_hz()[a] - STUB_HZ)
                .abs()
                .total_cmp(&(fb.centers_hz()[b] - STUB_HZ).abs())
        })
        .unwrap();
    let grid = PitchGrid::default();
    let bin = grid.nearest_bin(grid.cents_from_hz(STUB_HZ).unwrap());
    let mut net = LynxNet::zeros(&cfg).unwrap();
    let w0 = net.param_mut("embed.0.weight").unwrap();
    w0[channel * 3 + 1] = 1.0;
    w0[128 * 3 + channel * 3 + 1] = -1.0;
    let w1 = net.param_mut("embed.1.weight").unwrap();
    w1[1] = 1.0; // out 0 <- in 0, centre tap
    w1[3 + 1] = -1.0; // out 0 <- in 1
    let hw = net.param_mut("head.weight").unwrap();
    hw[bin * 2] = 2.0;
    hw[(bin - 1) * 2] = 1.0;
    hw[(bin + 1) * 2] = 1.0;
    let hb = net.param_mut("head.bias").unwrap();
    hb.iter_mut().for_each(|b| *b = -30.0);
    hb[bin] = 0.0;
    hb[bin - 1] = -1.0;
    hb[bin + 1] = -1.0;
    Pipeline::new(net, mel).unwrap()
}

pub fn write_stub(path: &Path) {
    stub_220().to_archive().save(path).unwrap();
}

pub fn archive_of(p: &Pipeline) -> TensorArchive {
    p.to_archive()
}

/// `n` clips of a 220 Hz tone with csv_hz labels on a 10 ms grid.
pub fn write_sine_dataset(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let audio = sine(STUB_HZ, 0.5, 0.6 + 0.1 * i as f64, 16000);
        write_wav_pcm16(dir.join(format!("clip{i}.wav")), &audio).unwrap();
        let frames = (audio.duration() / 0.01).floor() as usize;
        let mut csv = String::from("time,f0_hz\n");
        for t in 0..frames {
            csv.push_str(&format!("{:.2},{STUB_HZ}\n", t as f64 * 0.01));
        }
        std::fs::write(dir.join(format!("clip{i}.csv")), csv).unwrap();
    }
}
