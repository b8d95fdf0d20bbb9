//! Toy-scale training: synthetic labeled tones, gradient descent on a linear
//! pitch head over frozen features, and finite-difference gradient checks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive::TensorArchive;
use crate::audio::AudioBuffer;
use crate::error::{FcpeError, Result};
use crate::eval::LabeledClip;
use crate::mel::MelFrontend;
use crate::model::LynxNet;
use crate::pitch::{
    bce_grad_logits, bce_loss, decode_frame, make_target_with_sigma, sigmoid, PitchGrid, ProbMatrix,
    TARGET_SIGMA_CENTS, VOICING_THRESHOLD,
};
use crate::track::PitchTrack;

/// Label step of synthetic tones; also their f0 quantization step.
pub const SYNTH_STEP_S: f64 = 0.01;
const N_PARTIALS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthPattern {
    /// Clip `i` holds one pitch, evenly spaced over the range.
    Constant,
    /// Each clip glides between two random pitches in the range.
    Glide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub f0_range: (f64, f64),
    pub sample_rate: u32,
    pub duration_s: f64,
    pub pattern: SynthPattern,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_clips: 8,
            f0_range: (200.0, 400.0),
            sample_rate: 16000,
            duration_s: 0.5,
            pattern: SynthPattern::Glide,
            seed: 0,
        }
    }
}

/// Harmonic tone (partials `k = 1..=4` at amplitude `1/k`) whose f0 holds
/// `f0_steps[j]` during `[j, j + 1) * step_s`. Phase is continuous.
pub fn harmonic_tone(f0_steps: &[f64], step_s: f64, sample_rate: u32) -> Result<AudioBuffer> {
    let sr = sample_rate as f64;
    let len = (f0_steps.len() as f64 * step_s * sr).round() as usize;
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(len);
    for n in 0..len {
        let j = ((n as f64 / sr / step_s) as usize).min(f0_steps.len() - 1);
        let f = f0_steps[j];
        let mut v = 0.0;
        for k in 1..=N_PARTIALS {
            if k as f64 * f < sr / 2.0 {
                v += (k as f64 * phase).sin() / k as f64;
            }
        }
        samples.push((0.4 * v) as f32);
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
    }
    AudioBuffer::new(samples, sample_rate)
}

/// Synthetic harmonic clips with exact piecewise-constant f0 labels on a
/// 10 ms grid starting at 0.
pub fn synth_labeled_sines(spec: &SynthSpec) -> Result<Vec<LabeledClip>> {
    let (lo, hi) = spec.f0_range;
    let (min_hz, max_hz) = PitchGrid::default().span_hz();
    for f in [lo, hi] {
        if !(min_hz..=max_hz).contains(&f) {
            return Err(FcpeError::Range {
                f_hz: f,
                min_hz,
                max_hz,
            });
        }
    }
    if lo > hi || spec.n_clips == 0 || !(spec.duration_s >= SYNTH_STEP_S) {
        return Err(FcpeError::Config(format!(
            "need lo <= hi, n_clips >= 1 and duration >= {SYNTH_STEP_S} s (got {lo}..{hi}, {}, {})",
            spec.n_clips, spec.duration_s
        )));
    }
    let steps = (spec.duration_s / SYNTH_STEP_S).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_clips)
        .map(|i| {
            let f0: Vec<f64> = match spec.pattern {
                SynthPattern::Constant => {
                    let t = if spec.n_clips == 1 {
                        0.0
                    } else {
                        i as f64 / (spec.n_clips - 1) as f64
                    };
                    vec![lo + (hi - lo) * t; steps]
                }
                SynthPattern::Glide => {
                    let (a, b) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
                    (0..steps)
                        .map(|j| {
                            let u = if steps == 1 { 0.0 } else { j as f64 / (steps - 1) as f64 };
                            // geometric glide, i.e. linear in cents
                            a * (b / a).powf(u)
                        })
                        .collect()
                }
            };
            Ok(LabeledClip {
                name: format!("synth_{i:03}"),
                audio: harmonic_tone(&f0, SYNTH_STEP_S, spec.sample_rate)?,
                labels: PitchTrack::uniform(0.0, SYNTH_STEP_S, f0, None)?,
            })
        })
        .collect()
}

/// Frame-aligned training matrix: `frames x dim` features, `frames x bins`
/// targets and the f0 each frame was labeled with.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: usize,
    pub dim: usize,
    pub features: Vec<f32>,
    pub targets: Vec<f64>,
    pub f0: Vec<f64>,
}

/// Which frozen representation the head is trained on.
pub enum FeatureSource<'a> {
    /// Log-mel frames straight from the frontend.
    Mel,
    /// Backbone output of a network (before its head).
    Backbone(&'a LynxNet),
}

/// Extracts features for every labeled (voiced) frame of `clips`.
pub fn build_frame_set(
    clips: &[LabeledClip],
    frontend: &MelFrontend,
    source: &FeatureSource,
    grid: &PitchGrid,
    sigma_cents: f64,
) -> Result<FrameSet> {
    let period = frontend.config().frame_period();
    let mut set = FrameSet {
        frames: 0,
        dim: 0,
        features: Vec::new(),
        targets: Vec::new(),
        f0: Vec::new(),
    };
    for clip in clips {
        let mel = frontend.compute(&clip.audio)?;
        let (feat, dim) = match source {
            FeatureSource::Mel => (mel.as_slice().to_vec(), mel.n_mels()),
            FeatureSource::Backbone(net) => (net.features(mel.frames(), mel.as_slice())?, net.config().d_model),
        };
        set.dim = dim;
        for t in 0..mel.frames() {
            let f = clip.labels.f0_at(t as f64 * period);
            if f <= 0.0 {
                continue;
            }
            set.features.extend_from_slice(&feat[t * dim..(t + 1) * dim]);
            set.targets
                .extend(make_target_with_sigma(f, grid, sigma_cents)?.into_inner());
            set.f0.push(f);
            set.frames += 1;
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Frames per gradient-accumulation chunk; the update is still full-batch.
    pub batch_frames: usize,
    pub seed: u64,
    pub sigma_cents: f64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 200,
            batch_frames: 256,
            seed: 0,
            sigma_cents: TARGET_SIGMA_CENTS,
        }
    }
}

impl ToyTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.epochs == 0 || self.batch_frames == 0 {
            return Err(FcpeError::Config(format!(
                "need lr >= 0, epochs >= 1, batch_frames >= 1 (got {}, {}, {})",
                self.lr, self.epochs, self.batch_frames
            )));
        }
        Ok(())
    }
}

/// Linear head `logits = W x + b` over raw (unstandardized) features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub bins: usize,
    pub dim: usize,
    /// Row-major `bins x dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn logits(&self, x: &[f32], out: &mut [f64]) {
        for (o, (w, &b)) in out.iter_mut().zip(self.weight.chunks_exact(self.dim).zip(&self.bias)) {
            *o = b + w.iter().zip(x).map(|(&w, &x)| w * x as f64).sum::<f64>();
        }
    }

    /// Bin probabilities for every frame of `features` (`frames x dim`).
    pub fn predict(&self, features: &[f32]) -> Result<ProbMatrix> {
        let frames = features.len() / self.dim.max(1);
        let mut logits = vec![0.0; self.bins];
        let mut data = Vec::with_capacity(frames * self.bins);
        for x in features.chunks_exact(self.dim) {
            self.logits(x, &mut logits);
            data.extend(logits.iter().map(|&z| sigmoid(z) as f32));
        }
        ProbMatrix::new(frames, self.bins, data)
    }

    /// Stores the head as `head.weight` / `head.bias` in f32.
    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new();
        a.insert(
            "head.weight",
            vec![self.bins, self.dim],
            self.weight.iter().map(|&v| v as f32).collect(),
        )
        .expect("shape matches");
        a.insert(
            "head.bias",
            vec![self.bins],
            self.bias.iter().map(|&v| v as f32).collect(),
        )
        .expect("shape matches");
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub head: LinearHead,
    /// Mean per-frame loss before each epoch's update, then after the last.
    pub loss_curve: Vec<f64>,
}

impl TrainedHead {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in self.loss_curve.iter().enumerate() {
            s.push_str(&format!("{e},{l:.9}\n"));
        }
        s
    }
}

/// Per-feature affine map to zero mean and unit variance (constant features
/// are only centered).
#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(set: &FrameSet) -> Self {
        let (n, d) = (set.frames as f64, set.dim);
        let mut mean = vec![0.0; d];
        for x in set.features.chunks_exact(d) {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m += v as f64 / n;
            }
        }
        let mut var = vec![0.0; d];
        for x in set.features.chunks_exact(d) {
            for ((s, &v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v as f64 - m).powi(2) / n;
            }
        }
        let inv_std = var
            .iter()
            .map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, inv_std }
    }

    fn apply(&self, x: &[f32], out: &mut [f64]) {
        for (((o, &v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.inv_std) {
            *o = (v as f64 - m) * s;
        }
    }
}

/// Mean per-frame summed BCE and its gradient with respect to
/// `params = [W (bins x dim, row-major), b (bins)]` on standardized rows `xs`.
pub fn head_loss_and_grad(
    xs: &[f64],
    targets: &[f64],
    dim: usize,
    bins: usize,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let frames = xs.len() / dim;
    let (w, b) = params.split_at(bins * dim);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; bins];
    let mut p = vec![0.0; bins];
    for (x, y) in xs.chunks_exact(dim).zip(targets.chunks_exact(bins)) {
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = b[k] + w[k * dim..(k + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        for (pk, &zk) in p.iter_mut().zip(&z) {
            *pk = sigmoid(zk);
        }
        loss += bce_loss(y, &p)?;
        let g = bce_grad_logits(y, &z)?;
        let (gw, gb) = grad.split_at_mut(bins * dim);
        for (k, &gk) in g.iter().enumerate() {
            gb[k] += gk;
            for (gwi, &xi) in gw[k * dim..(k + 1) * dim].iter_mut().zip(x) {
                *gwi += gk * xi;
            }
        }
    }
    let n = frames.max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Full-batch gradient descent on a linear head. Features are standardized
/// internally; the returned head is folded back to act on raw features.
pub fn train_linear_head(set: &FrameSet, cfg: &ToyTrainConfig) -> Result<TrainedHead> {
    cfg.validate()?;
    let (d, n) = (set.dim, set.frames);
    if n == 0 || d == 0 {
        return Err(FcpeError::Degenerate("training set has no frames".into()));
    }
    if set.features.len() != n * d || !set.targets.len().is_multiple_of(n) {
        return Err(FcpeError::Shape(format!(
            "{} feature values and {} target values for {n} frames of dim {d}",
            set.features.len(),
            set.targets.len()
        )));
    }
    let bins = set.targets.len() / n;
    let std = Standardizer::fit(set);
    let mut xs = vec![0.0; n * d];
    for (x, o) in set.features.chunks_exact(d).zip(xs.chunks_exact_mut(d)) {
        std.apply(x, o);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: Vec<f64> = (0..bins * d).map(|_| rng.random_range(-0.01..0.01)).collect();
    params.extend(std::iter::repeat_n(0.0, bins));
    let chunk = cfg.batch_frames;
    // overflowing logits surface as non-probabilities inside the loss
    let diverged = |e: FcpeError, epoch| match e {
        FcpeError::Domain(_) => FcpeError::Divergence { epoch },
        e => e,
    };
    let eval = |params: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (xc, yc) in xs.chunks(chunk * d).zip(set.targets.chunks(chunk * bins)) {
            let w = (xc.len() / d) as f64 / n as f64;
            let (l, g) = head_loss_and_grad(xc, yc, d, bins, params)?;
            loss += w * l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += w * b);
        }
        Ok((loss, grad))
    };
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = eval(&params).map_err(|e| diverged(e, epoch))?;
        if !loss.is_finite() {
            return Err(FcpeError::Divergence { epoch });
        }
        curve.push(loss);
        params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= cfg.lr * g);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(FcpeError::Divergence { epoch: epoch + 1 });
        }
    }
    let (loss, _) = eval(&params).map_err(|e| diverged(e, cfg.epochs))?;
    if !loss.is_finite() {
        return Err(FcpeError::Divergence { epoch: cfg.epochs });
    }
    curve.push(loss);

    // fold the standardization into the weights
    let (w, b) = params.split_at(bins * d);
    let mut weight = vec![0.0; bins * d];
    let mut bias = b.to_vec();
    for k in 0..bins {
        for i in 0..d {
            let wk = w[k * d + i] * std.inv_std[i];
            weight[k * d + i] = wk;
            bias[k] -= wk * std.mean[i];
        }
    }
    Ok(TrainedHead {
        head: LinearHead {
            bins,
            dim: d,
            weight,
            bias,
        },
        loss_curve: curve,
    })
}

/// Percentage of frames whose decoded pitch is within 50 cents of the label.
pub fn training_rpa(head: &LinearHead, set: &FrameSet, grid: &PitchGrid) -> Result<f64> {
    let probs = head.predict(&set.features)?;
    let mut hits = 0usize;
    for (row, &f) in probs.rows().zip(&set.f0) {
        let est = decode_frame(row, grid, VOICING_THRESHOLD)?.f0_hz;
        if est > 0.0 && (1200.0 * (est / f).log2()).abs() <= 50.0 {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / set.frames.max(1) as f64)
}

/// Loss and gradient at a parameter vector.
pub type LossAndGrad<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;

/// Largest coordinate-wise relative discrepancy between the analytic gradient
/// returned by `loss_fn` and central finite differences.
pub fn grad_check(loss_fn: &LossAndGrad, params: &[f64], eps: f64) -> f64 {
    let (_, analytic) = loss_fn(params);
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        p[i] = params[i] + eps;
        let up = loss_fn(&p).0;
        p[i] = params[i] - eps;
        let down = loss_fn(&p).0;
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
