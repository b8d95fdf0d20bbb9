//! Audio-to-pitch-track pipeline: resample, log-mel, network, decode.

use std::path::Path;

use crate::archive::TensorArchive;
use crate::audio::{resample, AudioBuffer};
use crate::error::Result;
use crate::mel::{MelConfig, MelFrontend};
use crate::model::{load_weights, save_weights, LynxNet, ModelConfig};
use crate::pitch::{decode_track, PitchGrid, VOICING_THRESHOLD};
use crate::track::PitchTrack;

/// Anything that turns audio into a pitch track.
pub trait PitchEstimator: Sync {
    fn estimate(&self, audio: &AudioBuffer) -> Result<PitchTrack>;
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    net: LynxNet,
    frontend: MelFrontend,
    grid: PitchGrid,
    threshold: f64,
}

impl Pipeline {
    pub fn new(net: LynxNet, mel: MelConfig) -> Result<Self> {
        Ok(Self {
            net,
            frontend: MelFrontend::new(mel)?,
            grid: PitchGrid::default(),
            threshold: VOICING_THRESHOLD,
        })
    }

    /// Reads model and mel configuration from archive metadata.
    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let cfg = ModelConfig::from_metadata(archive.metadata())?;
        let mel = MelConfig::from_metadata(archive.metadata())?;
        Self::new(load_weights(archive, &cfg)?, mel)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&TensorArchive::load(path)?)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = save_weights(&self.net);
        a.extend_metadata(self.frontend.config().to_metadata());
        a
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn net(&self) -> &LynxNet {
        &self.net
    }

    pub fn frontend(&self) -> &MelFrontend {
        &self.frontend
    }

    pub fn grid(&self) -> &PitchGrid {
        &self.grid
    }
}

impl PitchEstimator for Pipeline {
    fn estimate(&self, audio: &AudioBuffer) -> Result<PitchTrack> {
        let cfg = self.frontend.config();
        let audio = resample(audio, cfg.sample_rate)?;
        let mel = self.frontend.compute(&audio)?;
        let probs = self.net.forward(&mel)?;
        decode_track(&probs, &self.grid, self.threshold, 0.0, cfg.frame_period())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_roundtrip_keeps_behavior() {
        let net = LynxNet::random(&ModelConfig::toy(8, 1, 3), 2).unwrap();
        let p = Pipeline::new(net, MelConfig::default()).unwrap();
        let audio = AudioBuffer::new((0..4000).map(|i| ((i as f32) * 0.07).sin()).collect(), 16000).unwrap();
        let a = p.estimate(&audio).unwrap();
        let q = Pipeline::from_archive(&TensorArchive::from_bytes(&p.to_archive().to_bytes()).unwrap()).unwrap();
        assert_eq!(q.estimate(&audio).unwrap(), a);
        assert_eq!(a.len(), 4000 / 160 + 1);
        assert!((a.period() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn other_rates_are_resampled() {
        let net = LynxNet::zeros(&ModelConfig::toy(4, 1, 3)).unwrap();
        let p = Pipeline::new(net, MelConfig::default()).unwrap();
        let audio = AudioBuffer::new(vec![0.0; 44100], 44100).unwrap();
        assert_eq!(p.estimate(&audio).unwrap().len(), 101);
    }
}
