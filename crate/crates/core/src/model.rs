//! Lynx-Net inference engine.
//!
//! ```text
//! mel [T x 128]
//!   -> conv1d(k=3) -> SiLU -> conv1d(k=3)          embedding
//!   -> (+ harmonic embedding vector, optional)
//!   -> n_layers x { LayerNorm -> pointwise d -> 2*e*d -> GLU
//!                   -> depthwise conv(k) -> SiLU -> pointwise e*d -> d
//!                   -> residual add }
//!   -> linear d -> 360 -> sigmoid                   [T x 360]
//! ```
//!
//! Activations are stored time-major (`[T][C]`), so pointwise convolutions
//! are plain GEMMs and the depthwise kernel vectorizes across channels.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive::TensorArchive;
use crate::error::{FcpeError, Result};
use crate::mel::{MelSpectrogram, MODEL_MELS};
use crate::pitch::{ProbMatrix, N_BINS};

const EMBED_KERNEL: usize = 3;
const LAYER_NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_mels: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub dw_kernel: usize,
    pub expand: usize,
    pub use_harmonic_emb: bool,
    pub n_bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_mels: MODEL_MELS,
            d_model: 512,
            n_layers: 6,
            dw_kernel: 31,
            expand: 2,
            use_harmonic_emb: false,
            n_bins: N_BINS,
        }
    }
}

impl ModelConfig {
    /// Small configuration for tests and demos.
    pub fn toy(d_model: usize, n_layers: usize, dw_kernel: usize) -> Self {
        Self {
            d_model,
            n_layers,
            dw_kernel,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FcpeError::Config(m));
        if self.n_layers == 0 {
            return bad("n_layers must be at least 1".into());
        }
        if self.d_model == 0 || self.expand == 0 || self.n_mels == 0 || self.n_bins == 0 {
            return bad(format!(
                "d_model, expand, n_mels and n_bins must be positive ({}, {}, {}, {})",
                self.d_model, self.expand, self.n_mels, self.n_bins
            ));
        }
        if self.dw_kernel.is_multiple_of(2) {
            return bad(format!("dw_kernel must be odd, got {}", self.dw_kernel));
        }
        Ok(())
    }

    /// Channels inside a block after gating.
    pub fn inner(&self) -> usize {
        self.expand * self.d_model
    }

    /// Frames of input that influence one output frame.
    pub fn receptive_field(&self) -> usize {
        let embed_rf = 2 * (EMBED_KERNEL - 1) + 1;
        embed_rf + self.n_layers * (self.dw_kernel - 1)
    }

    /// Every parameter tensor with its shape, in forward order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, e, k) = (self.d_model, self.inner(), self.dw_kernel);
        let mut v = vec![
            ("embed.0.weight".to_string(), vec![d, self.n_mels, EMBED_KERNEL]),
            ("embed.0.bias".to_string(), vec![d]),
            ("embed.1.weight".to_string(), vec![d, d, EMBED_KERNEL]),
            ("embed.1.bias".to_string(), vec![d]),
        ];
        if self.use_harmonic_emb {
            v.push(("harmonic_emb".to_string(), vec![d]));
        }
        for i in 0..self.n_layers {
            let p = format!("blocks.{i}");
            v.push((format!("{p}.norm.weight"), vec![d]));
            v.push((format!("{p}.norm.bias"), vec![d]));
            v.push((format!("{p}.pw1.weight"), vec![2 * e, d]));
            v.push((format!("{p}.pw1.bias"), vec![2 * e]));
            v.push((format!("{p}.dw.weight"), vec![e, k]));
            v.push((format!("{p}.dw.bias"), vec![e]));
            v.push((format!("{p}.pw2.weight"), vec![d, e]));
            v.push((format!("{p}.pw2.bias"), vec![d]));
        }
        v.push(("head.weight".to_string(), vec![self.n_bins, d]));
        v.push(("head.bias".to_string(), vec![self.n_bins]));
        v
    }

    pub fn to_metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("model.n_mels".into(), self.n_mels.to_string());
        m.insert("model.d_model".into(), self.d_model.to_string());
        m.insert("model.n_layers".into(), self.n_layers.to_string());
        m.insert("model.dw_kernel".into(), self.dw_kernel.to_string());
        m.insert("model.expand".into(), self.expand.to_string());
        m.insert("model.use_harmonic_emb".into(), self.use_harmonic_emb.to_string());
        m.insert("model.n_bins".into(), self.n_bins.to_string());
        m
    }

    /// Parses `model.*` metadata keys; missing keys keep defaults.
    pub fn from_metadata(meta: &BTreeMap<String, String>) -> Result<Self> {
        let pairs = meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("model.").map(|k| (k, v.as_str())));
        Self::from_pairs(pairs)
    }

    /// Parses a `key=value` text (one per line, `#` comments) with keys
    /// `d_model`, `n_layers`, `dw_kernel`, `expand`, `use_harmonic_emb`,
    /// `n_mels`, `n_bins`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| FcpeError::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            pairs.push((k.trim(), v.trim()));
        }
        Self::from_pairs(pairs)
    }

    fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            let num = || {
                v.parse::<usize>()
                    .map_err(|_| FcpeError::Config(format!("{k}: expected an integer, got {v:?}")))
            };
            match k {
                "n_mels" => cfg.n_mels = num()?,
                "d_model" => cfg.d_model = num()?,
                "n_layers" => cfg.n_layers = num()?,
                "dw_kernel" => cfg.dw_kernel = num()?,
                "expand" => cfg.expand = num()?,
                "n_bins" => cfg.n_bins = num()?,
                "use_harmonic_emb" => {
                    cfg.use_harmonic_emb = v
                        .parse()
                        .map_err(|_| FcpeError::Config(format!("{k}: expected true/false, got {v:?}")))?
                }
                other => return Err(FcpeError::Config(format!("unknown model config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Total parameter count, summed over [`ModelConfig::tensor_shapes`].
pub fn count_params(cfg: &ModelConfig) -> Result<u64> {
    cfg.validate()?;
    Ok(cfg
        .tensor_shapes()
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() as u64)
        .sum())
}

/// Multiply-accumulates per output frame across all convolution and linear layers.
pub fn macs_per_frame(cfg: &ModelConfig) -> Result<u64> {
    cfg.validate()?;
    let (d, e, k) = (cfg.d_model as u64, cfg.inner() as u64, cfg.dw_kernel as u64);
    let kc = EMBED_KERNEL as u64;
    let embed = cfg.n_mels as u64 * d * kc + d * d * kc;
    let block = d * 2 * e + e * k + e * d;
    let head = d * cfg.n_bins as u64;
    Ok(embed + cfg.n_layers as u64 * block + head)
}

/// FLOPs (2 per MAC) to process `seconds` of audio at `frame_rate` frames/s.
/// Padding frames are counted as full frames, so the count is linear in time.
pub fn count_flops(cfg: &ModelConfig, seconds: f64, frame_rate: f64) -> Result<f64> {
    if !(seconds > 0.0 && seconds.is_finite()) || !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(FcpeError::Domain(format!(
            "duration and frame rate must be positive (got {seconds} s, {frame_rate} fps)"
        )));
    }
    Ok(2.0 * macs_per_frame(cfg)? as f64 * seconds * frame_rate)
}

#[derive(Debug, Clone)]
struct Linear {
    out_dim: usize,
    in_dim: usize,
    weight: Vec<f32>, // [out][in]
    bias: Vec<f32>,
}

#[derive(Debug, Clone)]
struct Conv1d {
    out_dim: usize,
    in_dim: usize,
    kernel: usize,
    weight: Vec<f32>, // [out][in][k]
    bias: Vec<f32>,
}

#[derive(Debug, Clone)]
struct Depthwise {
    channels: usize,
    kernel: usize,
    weight: Vec<f32>,    // [c][k], as stored
    weight_kc: Vec<f32>, // [k][c], for the time-major kernel
    bias: Vec<f32>,
}

#[derive(Debug, Clone)]
struct Block {
    norm_weight: Vec<f32>,
    norm_bias: Vec<f32>,
    pw1: Linear,
    dw: Depthwise,
    pw2: Linear,
}

/// Immutable network; `forward` may run concurrently on different inputs.
#[derive(Debug, Clone)]
pub struct LynxNet {
    cfg: ModelConfig,
    embed0: Conv1d,
    embed1: Conv1d,
    harmonic: Option<Vec<f32>>,
    blocks: Vec<Block>,
    head: Linear,
}

/// `c[m x n] += a[m x k] * b[k x n]` with arbitrary strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    c: &mut [f32],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn fill_rows(frames: usize, bias: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(frames * bias.len());
    for _ in 0..frames {
        out.extend_from_slice(bias);
    }
    out
}

#[inline]
fn sigmoid_f32(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f32) -> f32 {
    x * sigmoid_f32(x)
}

impl Linear {
    fn forward(&self, frames: usize, x: &[f32]) -> Vec<f32> {
        let mut out = fill_rows(frames, &self.bias);
        gemm_acc(
            frames,
            self.in_dim,
            self.out_dim,
            x,
            self.in_dim,
            1,
            &self.weight,
            1,
            self.in_dim,
            &mut out,
        );
        out
    }
}

impl Conv1d {
    /// Same-padded (zeros) convolution over time.
    fn forward(&self, frames: usize, x: &[f32]) -> Vec<f32> {
        let (cin, k) = (self.in_dim, self.kernel);
        let pad = k / 2;
        let mut padded = vec![0f32; (frames + k - 1) * cin];
        padded[pad * cin..(pad + frames) * cin].copy_from_slice(x);
        let mut out = fill_rows(frames, &self.bias);
        for j in 0..k {
            gemm_acc(
                frames,
                cin,
                self.out_dim,
                &padded[j * cin..],
                cin,
                1,
                &self.weight[j..],
                k,
                cin * k,
                &mut out,
            );
        }
        out
    }
}

impl Depthwise {
    fn new(channels: usize, kernel: usize, weight: Vec<f32>, bias: Vec<f32>) -> Self {
        let mut weight_kc = vec![0f32; channels * kernel];
        for c in 0..channels {
            for j in 0..kernel {
                weight_kc[j * channels + c] = weight[c * kernel + j];
            }
        }
        Self {
            channels,
            kernel,
            weight,
            weight_kc,
            bias,
        }
    }

    /// Per-channel same-padded convolution over time.
    fn forward(&self, frames: usize, x: &[f32]) -> Vec<f32> {
        let c = self.channels;
        let r = self.kernel / 2;
        let mut out = fill_rows(frames, &self.bias);
        for t in 0..frames {
            let o = &mut out[t * c..(t + 1) * c];
            let j_lo = r.saturating_sub(t);
            let j_hi = (self.kernel - 1).min(frames - 1 + r - t);
            for j in j_lo..=j_hi {
                let src = t + j - r;
                let xin = &x[src * c..(src + 1) * c];
                let w = &self.weight_kc[j * c..(j + 1) * c];
                for ((o, &xv), &wv) in o.iter_mut().zip(xin).zip(w) {
                    *o += wv * xv;
                }
            }
        }
        out
    }
}

fn layer_norm(frames: usize, x: &[f32], weight: &[f32], bias: &[f32]) -> Vec<f32> {
    let d = weight.len();
    let mut out = vec![0f32; frames * d];
    for (row, o) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var as f32 + LAYER_NORM_EPS).sqrt();
        let mean = mean as f32;
        for i in 0..d {
            o[i] = (row[i] - mean) * inv * weight[i] + bias[i];
        }
    }
    out
}

impl Block {
    fn forward(&self, frames: usize, h: &mut [f32]) {
        let e = self.dw.channels;
        let y = layer_norm(frames, h, &self.norm_weight, &self.norm_bias);
        let u = self.pw1.forward(frames, &y);
        let mut g = vec![0f32; frames * e];
        for (row, gr) in u.chunks_exact(2 * e).zip(g.chunks_exact_mut(e)) {
            let (a, b) = row.split_at(e);
            for i in 0..e {
                gr[i] = a[i] * sigmoid_f32(b[i]);
            }
        }
        let mut v = self.dw.forward(frames, &g);
        v.iter_mut().for_each(|x| *x = silu(*x));
        let w = self.pw2.forward(frames, &v);
        for (hv, wv) in h.iter_mut().zip(&w) {
            *hv += wv;
        }
    }
}

impl LynxNet {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Runs the network on a mel spectrogram; output is `T x n_bins` in [0, 1].
    pub fn forward(&self, mel: &MelSpectrogram) -> Result<ProbMatrix> {
        if mel.n_mels() != self.cfg.n_mels {
            return Err(FcpeError::Shape(format!(
                "model expects {} mel channels, input has {}",
                self.cfg.n_mels,
                mel.n_mels()
            )));
        }
        self.forward_frames(mel.frames(), mel.as_slice())
    }

    /// Forward pass on a raw row-major `frames x n_mels` matrix.
    pub fn forward_frames(&self, frames: usize, x: &[f32]) -> Result<ProbMatrix> {
        if x.len() != frames * self.cfg.n_mels {
            return Err(FcpeError::Shape(format!(
                "input has {} values, expected {frames}x{}",
                x.len(),
                self.cfg.n_mels
            )));
        }
        let mut h = self.embed(frames, x);
        for b in &self.blocks {
            b.forward(frames, &mut h);
        }
        let mut out = self.head.forward(frames, &h);
        out.iter_mut().for_each(|v| *v = sigmoid_f32(*v));
        ProbMatrix::new(frames, self.cfg.n_bins, out)
    }

    /// Backbone features before the head (`frames x d_model`).
    pub fn features(&self, frames: usize, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != frames * self.cfg.n_mels {
            return Err(FcpeError::Shape(format!(
                "input has {} values, expected {frames}x{}",
                x.len(),
                self.cfg.n_mels
            )));
        }
        let mut h = self.embed(frames, x);
        for b in &self.blocks {
            b.forward(frames, &mut h);
        }
        Ok(h)
    }

    fn embed(&self, frames: usize, x: &[f32]) -> Vec<f32> {
        let mut h = self.embed0.forward(frames, x);
        h.iter_mut().for_each(|v| *v = silu(*v));
        let mut h = self.embed1.forward(frames, &h);
        if let Some(emb) = &self.harmonic {
            for row in h.chunks_exact_mut(emb.len()) {
                for (v, e) in row.iter_mut().zip(emb) {
                    *v += e;
                }
            }
        }
        h
    }

    /// Builds a network from explicitly named tensors.
    fn from_tensors(cfg: &ModelConfig, mut take: impl FnMut(&str) -> Vec<f32>) -> Self {
        let (d, e, k) = (cfg.d_model, cfg.inner(), cfg.dw_kernel);
        let embed0 = Conv1d {
            out_dim: d,
            in_dim: cfg.n_mels,
            kernel: EMBED_KERNEL,
            weight: take("embed.0.weight"),
            bias: take("embed.0.bias"),
        };
        let embed1 = Conv1d {
            out_dim: d,
            in_dim: d,
            kernel: EMBED_KERNEL,
            weight: take("embed.1.weight"),
            bias: take("embed.1.bias"),
        };
        let harmonic = cfg.use_harmonic_emb.then(|| take("harmonic_emb"));
        let blocks = (0..cfg.n_layers)
            .map(|i| {
                let p = format!("blocks.{i}");
                Block {
                    norm_weight: take(&format!("{p}.norm.weight")),
                    norm_bias: take(&format!("{p}.norm.bias")),
                    pw1: Linear {
                        out_dim: 2 * e,
                        in_dim: d,
                        weight: take(&format!("{p}.pw1.weight")),
                        bias: take(&format!("{p}.pw1.bias")),
                    },
                    dw: Depthwise::new(e, k, take(&format!("{p}.dw.weight")), take(&format!("{p}.dw.bias"))),
                    pw2: Linear {
                        out_dim: d,
                        in_dim: e,
                        weight: take(&format!("{p}.pw2.weight")),
                        bias: take(&format!("{p}.pw2.bias")),
                    },
                }
            })
            .collect();
        let head = Linear {
            out_dim: cfg.n_bins,
            in_dim: d,
            weight: take("head.weight"),
            bias: take("head.bias"),
        };
        Self {
            cfg: cfg.clone(),
            embed0,
            embed1,
            harmonic,
            blocks,
            head,
        }
    }

    /// Every weight zero, including layer-norm gains.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let shapes: BTreeMap<String, usize> = cfg
            .tensor_shapes()
            .into_iter()
            .map(|(n, s)| (n, s.iter().product()))
            .collect();
        Ok(Self::from_tensors(cfg, |name| vec![0.0; shapes[name]]))
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, unit layer-norm gains,
    /// deterministic per seed.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut archive = TensorArchive::new();
        for (name, shape) in cfg.tensor_shapes() {
            let n: usize = shape.iter().product();
            let data = if name.ends_with("norm.weight") {
                vec![1.0; n]
            } else if name.ends_with("norm.bias") {
                vec![0.0; n]
            } else {
                let fan_in = match name.as_str() {
                    "harmonic_emb" => cfg.d_model,
                    "embed.0.weight" | "embed.0.bias" => cfg.n_mels * EMBED_KERNEL,
                    "embed.1.weight" | "embed.1.bias" => cfg.d_model * EMBED_KERNEL,
                    "head.weight" | "head.bias" => cfg.d_model,
                    n if n.contains(".pw1.") => cfg.d_model,
                    n if n.contains(".dw.") => cfg.dw_kernel,
                    _ => cfg.inner(),
                };
                let bound = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            archive.insert(name, shape, data)?;
        }
        load_weights(&archive, cfg)
    }

    /// Mutable access to a named parameter, for hand-built test networks.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        let slot: &mut Vec<f32> = match name {
            "embed.0.weight" => &mut self.embed0.weight,
            "embed.0.bias" => &mut self.embed0.bias,
            "embed.1.weight" => &mut self.embed1.weight,
            "embed.1.bias" => &mut self.embed1.bias,
            "harmonic_emb" => self.harmonic.as_mut()?,
            "head.weight" => &mut self.head.weight,
            "head.bias" => &mut self.head.bias,
            _ => {
                let rest = name.strip_prefix("blocks.")?;
                let (idx, field) = rest.split_once('.')?;
                let b = self.blocks.get_mut(idx.parse::<usize>().ok()?)?;
                match field {
                    "norm.weight" => &mut b.norm_weight,
                    "norm.bias" => &mut b.norm_bias,
                    "pw1.weight" => &mut b.pw1.weight,
                    "pw1.bias" => &mut b.pw1.bias,
                    "pw2.weight" => &mut b.pw2.weight,
                    "pw2.bias" => &mut b.pw2.bias,
                    "dw.bias" => &mut b.dw.bias,
                    // the transposed copy must stay in sync; go through the archive instead
                    _ => return None,
                }
            }
        };
        Some(slot.as_mut_slice())
    }
}

/// Builds a network from an archive, checking every tensor the config needs.
pub fn load_weights(archive: &TensorArchive, cfg: &ModelConfig) -> Result<LynxNet> {
    cfg.validate()?;
    let shapes = cfg.tensor_shapes();
    let missing: Vec<String> = shapes
        .iter()
        .filter(|(n, _)| archive.get(n).is_none())
        .map(|(n, _)| n.clone())
        .collect();
    if !missing.is_empty() {
        return Err(FcpeError::MissingTensors(missing));
    }
    for (name, shape) in &shapes {
        let found = archive.get(name).expect("checked above").shape();
        if found != shape.as_slice() {
            return Err(FcpeError::TensorShape {
                name: name.clone(),
                expected: shape.clone(),
                found: found.to_vec(),
            });
        }
    }
    Ok(LynxNet::from_tensors(cfg, |name| {
        archive.get(name).expect("checked above").data().to_vec()
    }))
}

/// Serializes every parameter plus the `model.*` config metadata.
pub fn save_weights(net: &LynxNet) -> TensorArchive {
    let cfg = &net.cfg;
    let mut a = TensorArchive::new();
    let mut put = |name: &str, shape: Vec<usize>, data: &[f32]| {
        a.insert(name, shape, data.to_vec()).expect("shapes follow the config");
    };
    let (d, e, k) = (cfg.d_model, cfg.inner(), cfg.dw_kernel);
    put("embed.0.weight", vec![d, cfg.n_mels, EMBED_KERNEL], &net.embed0.weight);
    put("embed.0.bias", vec![d], &net.embed0.bias);
    put("embed.1.weight", vec![d, d, EMBED_KERNEL], &net.embed1.weight);
    put("embed.1.bias", vec![d], &net.embed1.bias);
    if let Some(h) = &net.harmonic {
        put("harmonic_emb", vec![d], h);
    }
    for (i, b) in net.blocks.iter().enumerate() {
        let p = format!("blocks.{i}");
        put(&format!("{p}.norm.weight"), vec![d], &b.norm_weight);
        put(&format!("{p}.norm.bias"), vec![d], &b.norm_bias);
        put(&format!("{p}.pw1.weight"), vec![2 * e, d], &b.pw1.weight);
        put(&format!("{p}.pw1.bias"), vec![2 * e], &b.pw1.bias);
        put(&format!("{p}.dw.weight"), vec![e, k], &b.dw.weight);
        put(&format!("{p}.dw.bias"), vec![e], &b.dw.bias);
        put(&format!("{p}.pw2.weight"), vec![d, e], &b.pw2.weight);
        put(&format!("{p}.pw2.bias"), vec![d], &b.pw2.bias);
    }
    put("head.weight", vec![cfg.n_bins, d], &net.head.weight);
    put("head.bias", vec![cfg.n_bins], &net.head.bias);
    a.extend_metadata(cfg.to_metadata());
    a
}
