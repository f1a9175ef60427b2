use rand::Rng;

use super::net::{pad_frames, vocoder_loss_graph, Segment, SegmentBatch};
use super::{VocoderConfig, VocoderParams};
use crate::dsp::{mel_spectrogram, AudioClip, MelSpectrogram};
use crate::encoder::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::numerics::Graph;
use crate::trainer::Adam;

/// A training recording with its features and fixed speaker embedding.
/// Frame `f` conditions samples `[f·hop, (f+1)·hop)`.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub audio: AudioClip,
    pub mel: MelSpectrogram,
    pub embedding: SpeakerEmbedding,
    padded: Vec<f32>,
    context: usize,
}

impl Utterance {
    pub fn new(audio: AudioClip, embedding: SpeakerEmbedding, cfg: &VocoderConfig) -> Result<Self> {
        cfg.validate()?;
        if embedding.dim() != cfg.embedding_dim {
            return Err(Error::Shape(format!(
                "embedding has {} dims, the vocoder expects {}",
                embedding.dim(),
                cfg.embedding_dim
            )));
        }
        let mel = mel_spectrogram(&audio, &cfg.mel)?;
        let needed = mel.frames() * cfg.hop();
        let audio = if audio.len() < needed {
            let mut s = audio.samples().to_vec();
            s.resize(needed, 0.0);
            AudioClip::from_clamped(s, audio.sample_rate())
        } else {
            audio
        };
        let context = cfg.context_frames();
        let padded = pad_frames(mel.values(), mel.frames(), cfg.n_mels(), context);
        Ok(Self {
            audio,
            mel,
            embedding,
            padded,
            context,
        })
    }

    pub fn frames(&self) -> usize {
        self.mel.frames()
    }

    /// The first `frames · hop` samples, the span the mel frames condition.
    pub fn aligned_audio(&self) -> AudioClip {
        let n = self.frames() * self.mel.config().hop_length;
        AudioClip::from_clamped(self.audio.samples()[..n].to_vec(), self.audio.sample_rate())
    }

    /// Teacher-forcing segment covering frames `[start, start + frames)`.
    pub fn segment(&self, start: usize, frames: usize) -> Result<Segment> {
        if frames == 0 || start + frames > self.frames() {
            return Err(Error::Data(format!(
                "segment [{start}, {}) outside {} frames",
                start + frames,
                self.frames()
            )));
        }
        let m = self.mel.n_mels();
        let hop = self.mel.config().hop_length;
        let s = self.audio.samples();
        Ok(Segment {
            mels: self.padded[start * m..(start + frames + 2 * self.context) * m].to_vec(),
            audio: s[start * hop..(start + frames) * hop].to_vec(),
            prev: if start == 0 { 0.0 } else { s[start * hop - 1] },
            embedding: self.embedding.values().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn random_segment(&self, frames: usize, rng: &mut impl Rng) -> Result<Segment> {
        if frames > self.frames() {
            return Err(Error::Data(format!(
                "utterance has {} frames, segment needs {frames}",
                self.frames()
            )));
        }
        self.segment(rng.gen_range(0..=self.frames() - frames), frames)
    }
}

/// Random equal-length segments drawn from random utterances.
pub fn sample_segments(
    utterances: &[Utterance],
    batch: usize,
    frames: usize,
    rng: &mut impl Rng,
) -> Result<SegmentBatch> {
    if utterances.is_empty() {
        return Err(Error::Data("no training utterances".into()));
    }
    let segments = (0..batch)
        .map(|_| utterances[rng.gen_range(0..utterances.len())].random_segment(frames, rng))
        .collect::<Result<_>>()?;
    Ok(SegmentBatch { frames, segments })
}

/// One teacher-forced update. Returns the batch loss before the update.
pub fn train_vocoder_step(
    batch: &SegmentBatch,
    params: &mut VocoderParams<f32>,
    opt: &mut Adam<f32>,
) -> Result<f64> {
    let mut g = Graph::<f32>::with_finite_checks(true);
    let bound = params.store.bind(&mut g, true);
    let loss = vocoder_loss_graph(&mut g, &bound, &params.config, batch)?;
    let value = g.value(loss).item()? as f64;
    let grads = g.backward(loss)?;
    let grads = bound.gradients(&params.store, &grads);
    opt.update(&mut params.store, &grads)?;
    Ok(value)
}
