#[path = "common/mod.rs"]
mod common;

use std::f64::consts::LN_2;
use std::process::Command;
use std::time::{Duration, Instant};

use fcpe::audio::AudioBuffer;
use fcpe::augment::{gen_colored_noise, mix_at_snr, NoiseSpec};
use fcpe::eval::{measure_rtf, rca, rpa};
use fcpe::mel::{MelConfig, MelFrontend};
use fcpe::model::{count_flops, count_params, load_weights, macs_per_frame, save_weights, LynxNet, ModelConfig};
use fcpe::pipeline::{Pipeline, PitchEstimator};
use fcpe::pitch::{
    bce_grad_logits, bce_loss, cents_from_hz, decode_frame, hz_from_cents, make_target, sigmoid, PitchGrid,
    TARGET_SIGMA_CENTS, VOICING_THRESHOLD,
};
use fcpe::track::PitchTrack;
use fcpe::train::{
    build_frame_set, synth_labeled_sines, train_linear_head, training_rpa, FeatureSource, SynthPattern, SynthSpec,
    ToyTrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.3} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn cent_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let f = rng.random_range(32.7..=1975.5);
        let back = hz_from_cents(cents_from_hz(f).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max(((back - f) / f).abs());
    }
    within_budget(t0.elapsed(), 1.0)?;
    ensure(worst <= 1e-9, || format!("max relative error {worst:e}"))?;
    Ok(format!("max rel err {worst:.1e}"))
}

/// Cents of bin `i` written out from first principles: C1 = 32.70 Hz against a 10 Hz reference.
fn oracle_center(i: usize) -> f64 {
    1200.0 * (32.70f64 / 10.0).log2() + 20.0 * i as f64
}

fn oracle_decode(p: &[f64]) -> Option<f64> {
    let mut peak = 0;
    for i in 1..p.len() {
        if p[i] > p[peak] {
            peak = i;
        }
    }
    if p[peak] < 0.05 {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for offset in -4i64..=4 {
        let j = peak as i64 + offset;
        if (0..360).contains(&j) {
            num += p[j as usize] * oracle_center(j as usize);
            den += p[j as usize];
        }
    }
    Some(num / den)
}

fn decode_oracle() -> Outcome {
    let grid = PitchGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t0 = Instant::now();
    let (mut worst, mut unvoiced) = (0.0f64, 0usize);
    for n in 0..10_000 {
        let scale: f64 = rng.random_range(0.0..1.0);
        let mut p: Vec<f64> = (0..360).map(|_| scale * rng.random::<f64>()).collect();
        if n % 10 == 0 {
            let edge = if n % 20 == 0 {
                rng.random_range(0..4)
            } else {
                rng.random_range(356..360)
            };
            p[edge] = scale.max(0.06);
        }
        let got = decode_frame(&p, &grid, VOICING_THRESHOLD).map_err(|e| e.to_string())?;
        match oracle_decode(&p) {
            None => {
                unvoiced += 1;
                ensure(got.f0_hz == 0.0, || {
                    format!("vector {n}: expected 0 Hz, got {}", got.f0_hz)
                })?;
            }
            Some(cents) => {
                let got_cents = 1200.0 * (got.f0_hz / 10.0).log2();
                worst = worst.max((got_cents - cents).abs());
            }
        }
    }
    within_budget(t0.elapsed(), 5.0)?;
    ensure(worst <= 1e-9, || format!("max cents error {worst:e}"))?;
    ensure(unvoiced > 0, || "no sub-threshold vectors were drawn".into())?;
    Ok(format!("max err {worst:.1e} cents, {unvoiced} unvoiced"))
}

fn bce_correctness() -> Outcome {
    let grid = PitchGrid::default();
    let y = make_target(440.0, &grid).map_err(|e| e.to_string())?;
    let half = vec![0.5; 360];
    let uniform = bce_loss(y.as_slice(), &half).map_err(|e| e.to_string())?;
    ensure((uniform - 360.0 * LN_2).abs() <= 1e-9, || {
        format!("uniform loss {uniform}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lo, hi) = grid.target_range_hz();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = rng.random_range(lo..hi);
        let y = make_target(f, &grid).map_err(|e| e.to_string())?.into_inner();
        let z: Vec<f64> = (0..360).map(|_| rng.random_range(-4.0..4.0)).collect();
        let loss = |z: &[f64]| bce_loss(&y, &z.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>()).unwrap();
        let analytic = bce_grad_logits(&y, &z).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut diff = 0.0f64;
        let mut norm = 0.0f64;
        let mut zp = z.clone();
        for k in 0..360 {
            zp[k] = z[k] + h;
            let up = loss(&zp);
            zp[k] = z[k] - h;
            let down = loss(&zp);
            zp[k] = z[k];
            let numeric = (up - down) / (2.0 * h);
            diff = diff.max((numeric - analytic[k]).abs());
            norm = norm.max(analytic[k].abs());
        }
        worst = worst.max(diff / norm);
    }
    ensure(worst <= 1e-4, || format!("worst relative gradient error {worst:e}"))?;
    Ok(format!("uniform {uniform:.12}, worst grad rel err {worst:.1e}"))
}

fn scalar_accuracy(reference: &[f64], estimate: &[f64]) -> (f64, f64) {
    let (mut voiced, mut raw, mut chroma) = (0u32, 0u32, 0u32);
    for (&r, &e) in reference.iter().zip(estimate) {
        if r <= 0.0 {
            continue;
        }
        voiced += 1;
        if e <= 0.0 {
            continue;
        }
        let d = 1200.0 * e.log2() - 1200.0 * r.log2();
        if d.abs() <= 50.0 {
            raw += 1;
        }
        let m = d.rem_euclid(1200.0);
        if m.min(1200.0 - m) <= 50.0 {
            chroma += 1;
        }
    }
    (
        100.0 * raw as f64 / voiced as f64,
        100.0 * chroma as f64 / voiced as f64,
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let track = |f0: Vec<f64>| PitchTrack::uniform(0.0, 0.01, f0, None).unwrap();
    for pair in 0..100 {
        let n = rng.random_range(20..200);
        let mut r: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.8) {
                    rng.random_range(60.0..1000.0)
                } else {
                    0.0
                }
            })
            .collect();
        r[0] = 200.0;
        let e: Vec<f64> = r
            .iter()
            .map(|&f| {
                let base = if f > 0.0 { f } else { 300.0 };
                match rng.random_range(0..5) {
                    0 => 0.0,
                    1 => base * 2f64.powf(rng.random_range(-45.0..45.0) / 1200.0),
                    2 => base * 2f64.powi(rng.random_range(-2..=2)) * 2f64.powf(rng.random_range(-40.0..40.0) / 1200.0),
                    _ => rng.random_range(60.0..1000.0),
                }
            })
            .collect();
        let (want_rpa, want_rca) = scalar_accuracy(&r, &e);
        let (rt, et) = (track(r), track(e));
        let got_rpa = rpa(&rt, &et, 50.0).map_err(|x| x.to_string())?;
        let got_rca = rca(&rt, &et, 50.0).map_err(|x| x.to_string())?;
        ensure(got_rpa == want_rpa && got_rca == want_rca, || {
            format!("pair {pair}: got ({got_rpa}, {got_rca}), scalar ({want_rpa}, {want_rca})")
        })?;
        ensure(got_rca >= got_rpa, || format!("pair {pair}: rca < rpa"))?;
    }
    let r = track(vec![220.0, 330.0, 440.0]);
    let up = track(vec![440.0, 660.0, 880.0]);
    let (o_rpa, o_rca) = (rpa(&r, &up, 50.0).unwrap(), rca(&r, &up, 50.0).unwrap());
    ensure(o_rpa == 0.0 && o_rca == 100.0, || {
        format!("octave case gave ({o_rpa}, {o_rca})")
    })?;
    Ok("100 pairs exact, octave case (0, 100)".into())
}

/// Averaged periodogram (Hann, 50% overlap) and a least-squares fit of dB against log10 f.
fn periodogram_slope(x: &[f32], sr: f64, seg: usize, f_lo: f64, f_hi: f64) -> f64 {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let window: Vec<f64> = (0..seg)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / seg as f64).cos())
        .collect();
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut start = 0;
    while start + seg <= x.len() {
        let mut buf: Vec<Complex<f64>> = (0..seg)
            .map(|n| Complex::new(x[start + n] as f64 * window[n], 0.0))
            .collect();
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        start += seg / 2;
    }
    let pts: Vec<(f64, f64)> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| (k as f64 * sr / seg as f64, p))
        .filter(|&(f, _)| f >= f_lo && f <= f_hi)
        .map(|(f, p)| (f.log10(), 10.0 * p.log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn psd_slopes() -> Outcome {
    let t0 = Instant::now();
    let sr = 16000;
    let mut report = Vec::new();
    for beta in [-1.0, 0.0, 1.0, 2.0] {
        let mut total = 0.0;
        for seed in 0..64 {
            let spec = NoiseSpec::new(beta, seed, 1 << 15, sr).map_err(|e| e.to_string())?;
            let x = gen_colored_noise(&spec).map_err(|e| e.to_string())?;
            total += periodogram_slope(x.samples(), sr as f64, 4096, 50.0, 6000.0);
        }
        let slope = total / 64.0;
        let want = -10.0 * beta;
        ensure((slope - want).abs() <= 1.5, || {
            format!("beta {beta}: slope {slope:.3}, want {want}")
        })?;
        report.push(format!("{beta}:{slope:+.2}"));
    }
    within_budget(t0.elapsed(), 30.0)?;
    Ok(format!("dB/decade {}", report.join(" ")))
}

fn snr_mixer() -> Outcome {
    let signal = common::sine(220.0, 0.5, 1.0, 16000);
    let noise = gen_colored_noise(&NoiseSpec::new(0.0, 9, 16000, 16000).unwrap()).map_err(|e| e.to_string())?;
    let mut report = Vec::new();
    for target in [20.0, 0.0, -20.0] {
        let mix = mix_at_snr(&signal, &noise, target).map_err(|e| e.to_string())?;
        let (mut ps, mut pn) = (0.0f64, 0.0f64);
        for (&m, &s) in mix.audio.samples().iter().zip(signal.samples()) {
            ps += (s as f64).powi(2);
            pn += (m as f64 - s as f64).powi(2);
        }
        let measured = 10.0 * (ps / pn).log10();
        ensure((measured - target).abs() <= 0.01, || {
            format!("target {target}: measured {measured}")
        })?;
        report.push(format!("{measured:.4}"));
    }
    Ok(format!("measured {}", report.join(", ")))
}

/// Reference embedding stage: two same-padded k3 convolutions with SiLU between.
fn oracle_embed(archive: &fcpe::archive::TensorArchive, d: usize, frames: usize, x: &[f32]) -> Vec<f64> {
    let conv = |name: &str, cin: usize, input: &[f64]| -> Vec<f64> {
        let w = archive.get(&format!("{name}.weight")).unwrap().data();
        let b = archive.get(&format!("{name}.bias")).unwrap().data();
        let mut out = vec![0.0; frames * d];
        for t in 0..frames {
            for o in 0..d {
                let mut acc = b[o] as f64;
                for j in 0..3 {
                    let src = t as i64 + j as i64 - 1;
                    if src < 0 || src >= frames as i64 {
                        continue;
                    }
                    for i in 0..cin {
                        acc += w[(o * cin + i) * 3 + j] as f64 * input[src as usize * cin + i];
                    }
                }
                out[t * d + o] = acc;
            }
        }
        out
    };
    let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let h: Vec<f64> = conv("embed.0", 128, &x)
        .into_iter()
        .map(|v| v / (1.0 + (-v).exp()))
        .collect();
    conv("embed.1", d, &h)
}

fn model_structure() -> Outcome {
    let toy = ModelConfig::toy(4, 1, 3);
    let embed0 = 4 * 128 * 3 + 4;
    let embed1 = 4 * 4 * 3 + 4;
    let norm = 4 + 4;
    let pw1 = 16 * 4 + 16;
    let dw = 8 * 3 + 8;
    let pw2 = 4 * 8 + 4;
    let head = 360 * 4 + 360;
    let params = (embed0 + embed1 + norm + pw1 + dw + pw2 + head) as u64;
    let macs = (4 * 128 * 3 + 4 * 4 * 3 + 16 * 4 + 8 * 3 + 4 * 8 + 360 * 4) as u64;
    let got_params = count_params(&toy).map_err(|e| e.to_string())?;
    let got_macs = macs_per_frame(&toy).map_err(|e| e.to_string())?;
    ensure(got_params == params, || format!("params {got_params} vs {params}"))?;
    ensure(got_macs == macs, || format!("macs {got_macs} vs {macs}"))?;
    let flops = count_flops(&toy, 0.01, 100.0).map_err(|e| e.to_string())?;
    ensure(flops == 2.0 * macs as f64, || format!("flops {flops}"))?;

    let cfg = ModelConfig::toy(6, 3, 5);
    let mut archive = save_weights(&LynxNet::random(&cfg, 5).map_err(|e| e.to_string())?);
    for i in 0..3 {
        for field in [
            "pw1.weight",
            "pw1.bias",
            "dw.weight",
            "dw.bias",
            "pw2.weight",
            "pw2.bias",
        ] {
            archive
                .get_mut(&format!("blocks.{i}.{field}"))
                .unwrap()
                .data_mut()
                .fill(0.0);
        }
    }
    let net = load_weights(&archive, &cfg).map_err(|e| e.to_string())?;
    let frames = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f32> = (0..frames * 128).map(|_| rng.random_range(-3.0..3.0)).collect();
    let feats = net.features(frames, &x).map_err(|e| e.to_string())?;
    let expect = oracle_embed(&archive, 6, frames, &x);
    let id_err = feats
        .iter()
        .zip(&expect)
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0, f64::max);
    ensure(id_err <= 1e-5, || {
        format!("zero blocks deviate from embedding by {id_err:e}")
    })?;

    let cfg = ModelConfig::toy(8, 2, 7);
    let net = LynxNet::random(&cfg, 7).map_err(|e| e.to_string())?;
    let radius = (cfg.receptive_field() - 1) / 2;
    ensure(cfg.receptive_field() == 5 + 2 * 6, || "receptive field formula".into())?;
    let frames = 50;
    let x: Vec<f32> = (0..frames * 128).map(|_| rng.random_range(-3.0..3.0)).collect();
    let base = net.forward_frames(frames, &x).map_err(|e| e.to_string())?;
    let t0 = 25;
    let mut y = x.clone();
    y[t0 * 128..(t0 + 1) * 128].iter_mut().for_each(|v| *v += 2.0);
    let pert = net.forward_frames(frames, &y).map_err(|e| e.to_string())?;
    for t in 0..frames {
        let changed = base.row(t) != pert.row(t);
        if t.abs_diff(t0) > radius {
            ensure(!changed, || format!("frame {t} changed outside radius {radius}"))?;
        } else if t.abs_diff(t0) == radius {
            ensure(changed, || format!("edge frame {t} unaffected"))?;
        }
    }

    let dflt = ModelConfig::default();
    let one = count_flops(&dflt, 1.0, 100.0).map_err(|e| e.to_string())?;
    for secs in [2.0, 5.0, 10.0, 60.0] {
        let f = count_flops(&dflt, secs, 100.0).map_err(|e| e.to_string())?;
        ensure(f == secs * one, || {
            format!("flops({secs}) = {f}, expected {}", secs * one)
        })?;
    }
    Ok(format!(
        "params {params}, macs {macs}, identity err {id_err:.1e}, rf {}",
        cfg.receptive_field()
    ))
}

fn learnability() -> Outcome {
    let t0 = Instant::now();
    let spec = SynthSpec {
        n_clips: 2,
        f0_range: (220.0, 330.0),
        pattern: SynthPattern::Constant,
        ..SynthSpec::default()
    };
    let clips = synth_labeled_sines(&spec).map_err(|e| e.to_string())?;
    let frontend = MelFrontend::new(MelConfig::default()).map_err(|e| e.to_string())?;
    let grid = PitchGrid::default();
    let set = build_frame_set(&clips, &frontend, &FeatureSource::Mel, &grid, TARGET_SIGMA_CENTS)
        .map_err(|e| e.to_string())?;
    let cfg = ToyTrainConfig {
        epochs: 200,
        ..ToyTrainConfig::default()
    };
    let trained = train_linear_head(&set, &cfg).map_err(|e| e.to_string())?;
    let acc = training_rpa(&trained.head, &set, &grid).map_err(|e| e.to_string())?;
    let curve = &trained.loss_curve;
    if let Some(i) = curve.windows(2).position(|w| w[1] > w[0]) {
        return Err(format!(
            "loss rose at epoch {}: {} -> {}",
            i + 1,
            curve[i],
            curve[i + 1]
        ));
    }
    within_budget(t0.elapsed(), 120.0)?;
    ensure(acc >= 99.0, || format!("training RPA {acc:.2}%"))?;
    Ok(format!(
        "RPA {acc:.2}%, loss {:.3} -> {:.3}, {:.1} s",
        curve[0],
        curve[curve.len() - 1],
        t0.elapsed().as_secs_f64()
    ))
}

struct Sleeper;

impl PitchEstimator for Sleeper {
    fn estimate(&self, audio: &AudioBuffer) -> fcpe::Result<PitchTrack> {
        std::thread::sleep(Duration::from_millis(3));
        PitchTrack::uniform(0.0, 0.01, vec![0.0; audio.len() / 160 + 1], None)
    }
}

fn rtf_harness() -> Outcome {
    let audio = common::sine(220.0, 0.5, 10.0, 16000);
    let stub = measure_rtf(&Sleeper, &audio, 0, 4).map_err(|e| e.to_string())?;
    ensure((stub.rtf * stub.t_audio - stub.t_process).abs() <= 1e-9, || {
        format!("{stub:?}")
    })?;
    let net = LynxNet::random(&ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(net, MelConfig::default()).map_err(|e| e.to_string())?;
    let r = measure_rtf(&pipeline, &audio, 1, 3).map_err(|e| e.to_string())?;
    ensure((r.rtf * r.t_audio - r.t_process).abs() <= 1e-9, || format!("{r:?}"))?;
    ensure(r.rtf < 0.5, || format!("default-config RTF {:.4}", r.rtf))?;
    Ok(format!("default-config RTF {:.4} on 10 s", r.rtf))
}

fn eval_determinism() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let model = dir.path().join("stub.fcpe");
    common::write_stub(&model);
    let data = dir.path().join("data");
    common::write_sine_dataset(&data, 3);
    let run = |name: &str| -> Result<String, String> {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_fcpe"))
            .args(["eval", "--model"])
            .arg(&model)
            .arg("--dataset")
            .arg(&data)
            .args(["--noise", "pink", "--snr", "20,0,-20", "--seeds", "3", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
        let text = std::fs::read_to_string(out).map_err(|e| e.to_string())?;
        Ok(text
            .lines()
            .filter(|l| !l.starts_with("# generated"))
            .collect::<Vec<_>>()
            .join("\n"))
    };
    let (a, b) = (run("a.csv")?, run("b.csv")?);
    ensure(a == b, || "reports differ".into())?;
    let rows = a.lines().filter(|l| !l.starts_with('#')).count() - 1;
    ensure(rows == 2 + 3 * 4, || format!("unexpected row count {rows}"))?;
    Ok(format!("{rows} rows identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("cent-grid round trip", cent_round_trip),
        ("decode oracle equivalence", decode_oracle),
        ("BCE correctness", bce_correctness),
        ("metric oracle", metric_oracle),
        ("colored-noise PSD slopes", psd_slopes),
        ("SNR mixer", snr_mixer),
        ("model structure", model_structure),
        ("end-to-end learnability", learnability),
        ("RTF harness", rtf_harness),
        ("eval determinism", eval_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {detail} [{secs:.2} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {why} [{secs:.2} s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
