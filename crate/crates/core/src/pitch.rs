//! Cent-grid pitch classification: the 360-bin axis, Gaussian targets, binary
//! cross-entropy and the local weighted-average decoder.

use crate::error::{FcpeError, Result};
use crate::track::PitchTrack;

/// Reference frequency of the cent scale.
pub const F_REF_HZ: f64 = 10.0;
/// Frequency of the lowest bin center (C1).
pub const C1_HZ: f64 = 32.70;
pub const N_BINS: usize = 360;
pub const BIN_STEP_CENTS: f64 = 20.0;
/// Standard deviation of the Gaussian target blur.
pub const TARGET_SIGMA_CENTS: f64 = 25.0;
/// Confidence below which a frame is declared unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.05;
/// Probability clamp used inside the BCE logarithms.
pub const BCE_EPS: f64 = 1e-7;
/// Half-width (in bins) of the decoding window.
pub const DECODE_HALF_WINDOW: usize = 4;

/// `1200 * log2(f / f_ref)` relative to the standard 10 Hz reference.
pub fn cents_from_hz(f_hz: f64) -> Result<f64> {
    cents_from_hz_ref(f_hz, F_REF_HZ)
}

pub fn hz_from_cents(cents: f64) -> Result<f64> {
    hz_from_cents_ref(cents, F_REF_HZ)
}

fn cents_from_hz_ref(f_hz: f64, f_ref: f64) -> Result<f64> {
    if !(f_hz.is_finite() && f_hz > 0.0) {
        return Err(FcpeError::Domain(format!(
            "frequency must be positive and finite, got {f_hz}"
        )));
    }
    Ok(1200.0 * (f_hz / f_ref).log2())
}

fn hz_from_cents_ref(cents: f64, f_ref: f64) -> Result<f64> {
    if !cents.is_finite() {
        return Err(FcpeError::Domain(format!("cents must be finite, got {cents}")));
    }
    Ok(f_ref * (cents / 1200.0).exp2())
}

/// Arithmetic grid of bin centers in cents: `c_i = c_min + i * bin_step` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchGrid {
    f_ref: f64,
    n_bins: usize,
    bin_step: f64,
    c_min: f64,
}

impl Default for PitchGrid {
    fn default() -> Self {
        Self {
            f_ref: F_REF_HZ,
            n_bins: N_BINS,
            bin_step: BIN_STEP_CENTS,
            c_min: 1200.0 * (C1_HZ / F_REF_HZ).log2(),
        }
    }
}

impl PitchGrid {
    /// Custom grid, mostly for toy problems. The default grid is the 360-bin
    /// C1-anchored axis.
    pub fn new(f_ref: f64, n_bins: usize, bin_step: f64, c_min: f64) -> Result<Self> {
        if !(f_ref > 0.0 && f_ref.is_finite()) || n_bins == 0 || !(bin_step > 0.0) || !c_min.is_finite() {
            return Err(FcpeError::Config(format!(
                "invalid pitch grid (f_ref {f_ref}, n_bins {n_bins}, step {bin_step}, c_min {c_min})"
            )));
        }
        Ok(Self {
            f_ref,
            n_bins,
            bin_step,
            c_min,
        })
    }

    pub fn f_ref(&self) -> f64 {
        self.f_ref
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_step(&self) -> f64 {
        self.bin_step
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.center(self.n_bins - 1)
    }

    /// Center of bin `i` (0-based) in cents.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.c_min + i as f64 * self.bin_step
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.center(i)).collect()
    }

    pub fn cents_from_hz(&self, f_hz: f64) -> Result<f64> {
        cents_from_hz_ref(f_hz, self.f_ref)
    }

    pub fn hz_from_cents(&self, cents: f64) -> Result<f64> {
        hz_from_cents_ref(cents, self.f_ref)
    }

    /// Frequency range accepted by [`make_target`]: the grid extended by 200 cents on each side.
    pub fn target_range_hz(&self) -> (f64, f64) {
        let lo = self.f_ref * ((self.c_min - 200.0) / 1200.0).exp2();
        let hi = self.f_ref * ((self.c_max() + 200.0) / 1200.0).exp2();
        (lo, hi)
    }

    /// Frequency span of the bin centers.
    pub fn span_hz(&self) -> (f64, f64) {
        (
            self.f_ref * (self.c_min / 1200.0).exp2(),
            self.f_ref * (self.c_max() / 1200.0).exp2(),
        )
    }

    /// Index of the bin whose center is nearest to `cents` (clamped to the grid).
    pub fn nearest_bin(&self, cents: f64) -> usize {
        let pos = ((cents - self.c_min) / self.bin_step).round();
        pos.clamp(0.0, (self.n_bins - 1) as f64) as usize
    }
}

/// Per-bin independent Bernoulli probabilities; need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>, grid: &PitchGrid) -> Result<Self> {
        check_len(values.len(), grid.n_bins(), "probability vector")?;
        check_unit_interval(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Gaussian-blurred one-hot classification target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector(Vec<f64>);

impl TargetVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_len(found: usize, expected: usize, what: &str) -> Result<()> {
    if found != expected {
        return Err(FcpeError::Shape(format!(
            "{what} has length {found}, expected {expected}"
        )));
    }
    Ok(())
}

fn check_unit_interval<P: Copy + Into<f64>>(values: &[P]) -> Result<()> {
    if let Some((i, v)) = values
        .iter()
        .map(|&v| v.into())
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(v))
    {
        return Err(FcpeError::Domain(format!("probability {v} at bin {i} outside [0, 1]")));
    }
    Ok(())
}

/// CREPE-style target with the default 25-cent blur.
pub fn make_target(f_true: f64, grid: &PitchGrid) -> Result<TargetVector> {
    make_target_with_sigma(f_true, grid, TARGET_SIGMA_CENTS)
}

/// `y_i = exp(-(c_i - c(f))^2 / (2 sigma^2))`, zeroed beyond three sigma.
pub fn make_target_with_sigma(f_true: f64, grid: &PitchGrid, sigma: f64) -> Result<TargetVector> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FcpeError::Config(format!("target sigma must be positive, got {sigma}")));
    }
    let c = grid.cents_from_hz(f_true)?;
    if c < grid.c_min() - 200.0 || c > grid.c_max() + 200.0 {
        let (min_hz, max_hz) = grid.target_range_hz();
        return Err(FcpeError::Range {
            f_hz: f_true,
            min_hz,
            max_hz,
        });
    }
    let cutoff = 3.0 * sigma;
    let denom = 2.0 * sigma * sigma;
    let values = (0..grid.n_bins())
        .map(|i| {
            let d = grid.center(i) - c;
            if d.abs() > cutoff {
                0.0
            } else {
                (-d * d / denom).exp()
            }
        })
        .collect();
    Ok(TargetVector(values))
}

/// Summed binary cross-entropy with predictions clamped to `[eps, 1 - eps]`.
pub fn bce_loss(target: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(pred.len(), target.len(), "prediction")?;
    check_unit_interval(pred)?;
    let loss = target
        .iter()
        .zip(pred)
        .map(|(&y, &p)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(loss)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient of the (unclamped) sigmoid-BCE loss with respect to the logits:
/// `sigmoid(z) - y`.
pub fn bce_grad_logits(target: &[f64], logits: &[f64]) -> Result<Vec<f64>> {
    check_len(logits.len(), target.len(), "logit vector")?;
    Ok(target.iter().zip(logits).map(|(&y, &z)| sigmoid(z) - y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedFrame {
    /// Estimated f0 in Hz, or 0 for unvoiced frames.
    pub f0_hz: f64,
    /// Peak probability.
    pub confidence: f64,
}

/// First index of the maximum; ties go to the lowest bin.
fn argmax<P: Copy + Into<f64>>(values: &[P]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        let v = v.into();
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Local weighted-average decoding of one frame of bin probabilities.
pub fn decode_frame<P: Copy + Into<f64>>(probs: &[P], grid: &PitchGrid, threshold: f64) -> Result<DecodedFrame> {
    check_len(probs.len(), grid.n_bins(), "probability vector")?;
    check_unit_interval(probs)?;
    Ok(decode_unchecked(probs, grid, threshold))
}

fn decode_unchecked<P: Copy + Into<f64>>(probs: &[P], grid: &PitchGrid, threshold: f64) -> DecodedFrame {
    let (peak, confidence) = argmax(probs);
    if !(confidence >= threshold) {
        return DecodedFrame { f0_hz: 0.0, confidence };
    }
    let lo = peak.saturating_sub(DECODE_HALF_WINDOW);
    let hi = (peak + DECODE_HALF_WINDOW).min(probs.len() - 1);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &p) in probs.iter().enumerate().take(hi + 1).skip(lo) {
        let p = p.into();
        num += p * grid.center(i);
        den += p;
    }
    // den >= confidence >= threshold; a zero threshold with an all-zero frame
    // still has no pitch.
    let f0_hz = if den > 0.0 {
        grid.f_ref() * (num / den / 1200.0).exp2()
    } else {
        0.0
    };
    DecodedFrame { f0_hz, confidence }
}

/// Row-major `frames x bins` matrix of bin probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    frames: usize,
    bins: usize,
    data: Vec<f32>,
}

impl ProbMatrix {
    pub fn new(frames: usize, bins: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(FcpeError::Shape(format!(
                "matrix data has {} values, expected {frames}x{bins}",
                data.len()
            )));
        }
        Ok(Self { frames, bins, data })
    }

    /// Builds a matrix from rows; ragged input is a shape error.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let bins = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * bins);
        for (t, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != bins {
                return Err(FcpeError::Shape(format!(
                    "row {t} has {} columns, expected {bins}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            frames: rows.len(),
            bins,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; an empty matrix has no rows anyway.
        self.data.chunks_exact(self.bins.max(1)).take(self.frames)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

/// Decodes every frame of `probs`; frame `t` is stamped at `start + t * period`.
pub fn decode_track(
    probs: &ProbMatrix,
    grid: &PitchGrid,
    threshold: f64,
    start: f64,
    period: f64,
) -> Result<PitchTrack> {
    if probs.frames() > 0 {
        check_len(probs.bins(), grid.n_bins(), "probability matrix row")?;
        check_unit_interval(probs.as_slice())?;
    }
    let (f0, conf): (Vec<f64>, Vec<f64>) = probs
        .rows()
        .map(|row| {
            let d = decode_unchecked(row, grid, threshold);
            (d.f0_hz, d.confidence)
        })
        .unzip();
    PitchTrack::uniform(start, period, f0, Some(conf))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop, clippy::manual_clamp)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_grid(n: usize) -> PitchGrid {
        PitchGrid::new(10.0, n, 20.0, 3000.0).unwrap()
    }

    #[test]
    fn cents_reference_points() {
        assert_eq!(cents_from_hz(10.0).unwrap(), 0.0);
        assert_eq!(cents_from_hz(20.0).unwrap(), 1200.0);
        assert_eq!(hz_from_cents(0.0).unwrap(), 10.0);
        assert_eq!(hz_from_cents(1200.0).unwrap(), 20.0);
        let rt = hz_from_cents(cents_from_hz(440.0).unwrap()).unwrap();
        assert!((rt - 440.0).abs() < 1e-9);
    }

    #[test]
    fn c1_cents_matches_log_evaluation() {
        // 1200 * log2(3.27) = 1200 * ln(3.27) / ln(2), ln(3.27) = 1.18478997...
        // evaluated at 30 digits: 2051.148762868029...
        let c = cents_from_hz(32.70).unwrap();
        assert!((c - 2_051.148_762_868_029).abs() < 1e-9, "{c}");
        assert_eq!(PitchGrid::default().center(0), c);
    }

    #[test]
    fn domain_errors() {
        assert!(cents_from_hz(0.0).is_err());
        assert!(cents_from_hz(-5.0).is_err());
        assert!(cents_from_hz(f64::NAN).is_err());
        assert!(cents_from_hz(f64::INFINITY).is_err());
        assert!(hz_from_cents(f64::NAN).is_err());
    }

    #[test]
    fn grid_is_arithmetic() {
        let g = PitchGrid::default();
        assert_eq!(g.n_bins(), 360);
        for i in 1..g.n_bins() {
            assert!((g.center(i) - g.center(i - 1) - 20.0).abs() < 1e-9);
        }
        // 7180 cents above C1 lands just above B7 (1975.5 Hz).
        let (lo, hi) = g.span_hz();
        assert!((lo - 32.70).abs() < 1e-9);
        assert!(hi > 1975.5 && hi < 2069.0, "{hi}");
    }

    #[test]
    fn target_peaks_at_bin_center() {
        let g = PitchGrid::default();
        let f = g.hz_from_cents(g.center(100)).unwrap();
        let y = make_target(f, &g).unwrap();
        assert!((y.as_slice()[100] - 1.0).abs() < 1e-12);
        let expected = (-1600.0f64 / 1250.0).exp();
        assert!((y.as_slice()[102] - expected).abs() < 1e-9);
        assert!((y.as_slice()[98] - expected).abs() < 1e-9);
        // beyond 75 cents
        assert_eq!(y.as_slice()[104], 0.0);
        assert_eq!(y.as_slice()[96], 0.0);
    }

    #[test]
    fn target_midway_between_bins() {
        let g = PitchGrid::default();
        let f = g.hz_from_cents(g.center(50) + 10.0).unwrap();
        let y = make_target(f, &g).unwrap();
        let expected = (-100.0f64 / 1250.0).exp();
        assert!((y.as_slice()[50] - expected).abs() < 1e-9);
        assert!((y.as_slice()[51] - expected).abs() < 1e-9);
    }

    #[test]
    fn target_range_error_lists_interval() {
        let g = PitchGrid::default();
        let err = make_target(5.0, &g).unwrap_err();
        match err {
            FcpeError::Range { min_hz, max_hz, .. } => {
                assert!(min_hz < 32.7 && max_hz > 2000.0);
            }
            e => panic!("unexpected {e}"),
        }
        assert!(make_target(30.0, &g).is_ok());
    }

    #[test]
    fn bce_uniform_half_is_n_ln2() {
        let y = vec![0.0; 360];
        let p = vec![0.5; 360];
        let l = bce_loss(&y, &p).unwrap();
        assert!((l - 360.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert!((l - 249.532).abs() < 1e-3);
    }

    #[test]
    fn bce_perfect_prediction_is_clamp_floor() {
        let mut y = vec![0.0; 360];
        y[42] = 1.0;
        let l = bce_loss(&y, &y).unwrap();
        assert!(l >= 0.0 && l <= 360.0 * -(1.0 - BCE_EPS).ln() + 1e-12);
        assert!(l < 3.7e-5);
    }

    #[test]
    fn bce_matches_scalar_oracle_on_toy_grid() {
        let y = [0.0, 0.3, 1.0, 0.7, 0.1];
        let p = [0.2, 0.5, 0.9, 0.6, 0.0];
        let mut expected = 0.0;
        for i in 0..5 {
            let q: f64 = f64::max(BCE_EPS, f64::min(1.0 - BCE_EPS, p[i]));
            expected -= y[i] * q.ln() + (1.0 - y[i]) * (1.0 - q).ln();
        }
        assert_eq!(bce_loss(&y, &p).unwrap(), expected);
    }

    #[test]
    fn bce_shape_error() {
        assert!(matches!(bce_loss(&[0.0; 3], &[0.5; 4]), Err(FcpeError::Shape(_))));
        assert!(matches!(
            bce_grad_logits(&[0.0; 3], &[0.5; 4]),
            Err(FcpeError::Shape(_))
        ));
    }

    #[test]
    fn grad_logits_trivial_cases() {
        let g = bce_grad_logits(&[0.0; 6], &[0.0; 6]).unwrap();
        assert!(g.iter().all(|&v| v == 0.5));
        let mut y = [0.0; 6];
        y[2] = 1.0;
        let g = bce_grad_logits(&y, &[0.0; 6]).unwrap();
        for (i, v) in g.iter().enumerate() {
            assert_eq!(*v, if i == 2 { -0.5 } else { 0.5 });
        }
    }

    #[test]
    fn grad_logits_matches_finite_differences() {
        // 8-bin toy grid; central differences of bce_loss(y, sigmoid(z)).
        let y = [0.0, 0.1, 0.6, 1.0, 0.6, 0.1, 0.0, 0.0];
        let z = [-1.3, 0.4, 2.1, -0.2, 0.9, -2.5, 1.7, 0.05];
        let analytic = bce_grad_logits(&y, &z).unwrap();
        let loss = |z: &[f64]| {
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            bce_loss(&y, &p).unwrap()
        };
        let h = 1e-5;
        for i in 0..8 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let numeric = (loss(&zp) - loss(&zm)) / (2.0 * h);
            let rel = (numeric - analytic[i]).abs() / analytic[i].abs().max(1e-12);
            assert!(rel < 1e-5, "bin {i}: {numeric} vs {}", analytic[i]);
        }
    }

    #[test]
    fn decode_one_hot() {
        let g = PitchGrid::default();
        let mut p = vec![0.0; 360];
        p[123] = 1.0;
        let d = decode_frame(&p, &g, VOICING_THRESHOLD).unwrap();
        assert_eq!(d.f0_hz, g.hz_from_cents(g.center(123)).unwrap());
        assert_eq!(d.confidence, 1.0);
    }

    #[test]
    fn decode_below_threshold_is_unvoiced() {
        let g = PitchGrid::default();
        let mut p = vec![0.01; 360];
        p[200] = 0.04;
        let d = decode_frame(&p, &g, VOICING_THRESHOLD).unwrap();
        assert_eq!(d.f0_hz, 0.0);
        assert_eq!(d.confidence, 0.04);
        p[200] = 0.05;
        assert!(decode_frame(&p, &g, VOICING_THRESHOLD).unwrap().f0_hz > 0.0);
    }

    #[test]
    fn decode_symmetric_neighbors() {
        let g = PitchGrid::default();
        let mut p = vec![0.0; 360];
        p[199] = 0.5;
        p[200] = 1.0;
        p[201] = 0.5;
        let d = decode_frame(&p, &g, VOICING_THRESHOLD).unwrap();
        let c = g.cents_from_hz(d.f0_hz).unwrap();
        assert!((c - g.center(200)).abs() < 1e-9);
    }

    #[test]
    fn decode_asymmetric_matches_nine_term_oracle() {
        let g = toy_grid(20);
        let mut p = vec![0.0; 20];
        p[10] = 1.0;
        p[11] = 0.5;
        p[7] = 0.2;
        p[3] = 0.9; // outside the window, must be ignored
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 6..=14 {
            num += p[i] * (3000.0 + 20.0 * i as f64);
            den += p[i];
        }
        let d = decode_frame(&p, &g, VOICING_THRESHOLD).unwrap();
        let c = g.cents_from_hz(d.f0_hz).unwrap();
        assert!((c - num / den).abs() < 1e-9);
    }

    #[test]
    fn decode_window_clamps_at_edges() {
        let g = toy_grid(20);
        let mut p = vec![0.0; 20];
        p[0] = 1.0;
        p[1] = 0.5;
        p[19] = 0.3; // far edge, not in window
        let d = decode_frame(&p, &g, VOICING_THRESHOLD).unwrap();
        let c = g.cents_from_hz(d.f0_hz).unwrap();
        let expected = (1.0 * 3000.0 + 0.5 * 3020.0) / 1.5;
        assert!((c - expected).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_go_low() {
        let g = toy_grid(20);
        let mut p = vec![0.0; 20];
        p[5] = 0.8;
        p[15] = 0.8;
        let d = decode_frame(&p, &g, VOICING_THRESHOLD).unwrap();
        let c = g.cents_from_hz(d.f0_hz).unwrap();
        assert!((c - g.center(5)).abs() < 1e-9);
    }

    #[test]
    fn decode_rejects_bad_vectors() {
        let g = PitchGrid::default();
        assert!(decode_frame(&[0.5f64; 10], &g, 0.05).is_err());
        let mut p = vec![0.0; 360];
        p[3] = 1.5;
        assert!(decode_frame(&p, &g, 0.05).is_err());
    }

    #[test]
    fn decode_track_empty_and_ragged() {
        let g = PitchGrid::default();
        let empty = ProbMatrix::new(0, 360, vec![]).unwrap();
        assert!(decode_track(&empty, &g, 0.05, 0.0, 0.01).unwrap().is_empty());
        let rows = vec![vec![0.0f32; 360], vec![0.0f32; 359]];
        assert!(matches!(ProbMatrix::from_rows(&rows), Err(FcpeError::Shape(_))));
    }

    #[test]
    fn decode_track_identical_rows() {
        let g = PitchGrid::default();
        let mut row = vec![0.0f32; 360];
        row[77] = 0.9;
        row[78] = 0.3;
        let m = ProbMatrix::from_rows(&vec![row; 5]).unwrap();
        let tr = decode_track(&m, &g, 0.05, 0.0, 0.01).unwrap();
        assert!(tr.f0().windows(2).all(|w| w[0] == w[1]));
        assert_eq!(tr.len(), 5);
        assert!((tr.time(4) - 0.04).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn roundtrip_cents(f in 1.0f64..20000.0) {
            let back = hz_from_cents(cents_from_hz(f).unwrap()).unwrap();
            prop_assert!(((back - f) / f).abs() < 1e-9);
        }

        #[test]
        fn decode_scale_invariant(
            raw in proptest::collection::vec(0.0f64..1.0, 360),
            lambda in 0.1f64..1.0,
        ) {
            let g = PitchGrid::default();
            let max = raw.iter().cloned().fold(0.0, f64::max);
            prop_assume!(max * lambda >= VOICING_THRESHOLD);
            let scaled: Vec<f64> = raw.iter().map(|v| v * lambda).collect();
            let a = decode_frame(&raw, &g, VOICING_THRESHOLD).unwrap();
            let b = decode_frame(&scaled, &g, VOICING_THRESHOLD).unwrap();
            let ca = g.cents_from_hz(a.f0_hz).unwrap();
            let cb = g.cents_from_hz(b.f0_hz).unwrap();
            prop_assert!((ca - cb).abs() < 1e-9);
        }

        #[test]
        fn decode_stays_near_grid(raw in proptest::collection::vec(0.0f64..1.0, 360)) {
            let g = PitchGrid::default();
            let d = decode_frame(&raw, &g, VOICING_THRESHOLD).unwrap();
            if d.f0_hz > 0.0 {
                let lo = g.hz_from_cents(g.c_min() - 80.0).unwrap();
                let hi = g.hz_from_cents(g.c_max() + 80.0).unwrap();
                prop_assert!(d.f0_hz >= lo && d.f0_hz <= hi);
            }
            // deterministic
            let again = decode_frame(&raw, &g, VOICING_THRESHOLD).unwrap();
            prop_assert_eq!(d.f0_hz.to_bits(), again.f0_hz.to_bits());
        }

        #[test]
        fn bce_nonnegative(
            y in proptest::collection::vec(0.0f64..=1.0, 16),
            p in proptest::collection::vec(0.0f64..=1.0, 16),
        ) {
            prop_assert!(bce_loss(&y, &p).unwrap() >= 0.0);
        }

        #[test]
        fn target_translation_covariant(bin in 10usize..340, offset in -9.0f64..9.0) {
            let g = PitchGrid::default();
            let f = g.hz_from_cents(g.center(bin) + offset).unwrap();
            let f_up = f * (20.0f64 / 1200.0).exp2();
            let a = make_target(f, &g).unwrap();
            let b = make_target(f_up, &g).unwrap();
            for i in 5..354 {
                prop_assert!((a.as_slice()[i] - b.as_slice()[i + 1]).abs() < 1e-9);
            }
        }
    }
}
