use super::model::encode_windows;
use super::{EncoderParams, SpeakerEmbedding};
use crate::dsp::{mel_spectrogram, vad_trim, AudioClip, MelConfig, MelSpectrogram, DEFAULT_VAD_THRESHOLD_DB};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// How an utterance is cut into encoder windows.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowConfig {
    pub mel: MelConfig,
    /// Frames per window (160 frames of 10 ms is 1.6 s).
    pub window_frames: usize,
    /// Frames between window starts (half a window gives 50% overlap).
    pub hop_frames: usize,
    /// Silence trimming threshold below peak; `None` disables trimming.
    pub vad_threshold_db: Option<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            mel: MelConfig::encoder(),
            window_frames: 160,
            hop_frames: 80,
            vad_threshold_db: Some(DEFAULT_VAD_THRESHOLD_DB),
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        if self.window_frames == 0 || self.hop_frames == 0 {
            return Err(Error::Config("window and hop must be positive".into()));
        }
        Ok(())
    }

    /// Samples needed for exactly one full window.
    pub fn min_samples(&self) -> usize {
        self.mel.n_fft + (self.window_frames - 1) * self.mel.hop_length
    }

    /// Features of `clip` after optional trimming, zero-padded at the end so
    /// that at least one whole window exists.
    pub fn features(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        self.validate()?;
        let clip = match self.vad_threshold_db {
            Some(db) => vad_trim(clip, db)?,
            None => clip.clone(),
        };
        if clip.is_empty() {
            return Err(Error::Data("empty clip".into()));
        }
        let clip = if clip.len() < self.min_samples() {
            let mut s = clip.samples().to_vec();
            s.resize(self.min_samples(), 0.0);
            AudioClip::from_clamped(s, clip.sample_rate())
        } else {
            clip
        };
        mel_spectrogram(&clip, &self.mel)
    }

    /// Start frames of the windows covering `frames`.
    pub fn window_starts(&self, frames: usize) -> Vec<usize> {
        if frames < self.window_frames {
            return Vec::new();
        }
        (0..=frames - self.window_frames).step_by(self.hop_frames).collect()
    }
}

/// Mean of unit embeddings, re-normalized.
pub fn pool_embeddings(embeddings: &[SpeakerEmbedding]) -> Result<SpeakerEmbedding> {
    let first = embeddings.first().ok_or_else(|| Error::Data("nothing to pool".into()))?;
    let mut acc = vec![0.0; first.dim()];
    for e in embeddings {
        if e.dim() != acc.len() {
            return Err(Error::Shape("embeddings of different dimensions".into()));
        }
        for (a, v) in acc.iter_mut().zip(e.values()) {
            *a += v;
        }
    }
    SpeakerEmbedding::normalized(acc)
}

/// Utterance embedding: trim, slide overlapping windows over the features,
/// embed each and average.
pub fn embed_utterance<T: Scalar>(
    clip: &AudioClip,
    params: &EncoderParams<T>,
    cfg: &WindowConfig,
) -> Result<SpeakerEmbedding> {
    if cfg.mel.n_mels != params.config.n_mels {
        return Err(Error::Config(format!(
            "features have {} mel bands but the encoder expects {}",
            cfg.mel.n_mels, params.config.n_mels
        )));
    }
    let mel = cfg.features(clip)?;
    let windows: Vec<MelSpectrogram> = cfg
        .window_starts(mel.frames())
        .into_iter()
        .map(|s| mel.slice_frames(s, cfg.window_frames))
        .collect::<Result<_>>()?;
    let refs: Vec<&[f32]> = windows.iter().map(|w| w.values()).collect();
    pool_embeddings(&encode_windows(&refs, cfg.window_frames, params)?)
}
