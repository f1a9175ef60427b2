//! Resumable training state for both models.
//!
//! Step `n` draws all of its randomness from `step_rng(seed, n)`, so a run
//! restored from a checkpoint continues exactly where it stopped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, ModelKind};
use super::data::Ge2eSampler;
use super::optim::Adam;
use crate::config::RunConfig;
use crate::dsp::MelSpectrogram;
use crate::encoder::{train_encoder_step, EncoderParams, Ge2eBatch};
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::vocoder::{sample_segments, train_vocoder_step, Utterance, VocoderParams};

/// Independent random stream for training step `step`; stream 0 is used
/// for parameter initialization.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

fn pack(kind: ModelKind, params: &ParamStore<f32>, opt: &Adam<f32>, config: Vec<(String, String)>) -> Checkpoint {
    let mut tensors = params.clone();
    for (name, t) in opt.m.iter() {
        tensors.insert(format!("adam.m.{name}"), t.clone());
    }
    for (name, t) in opt.v.iter() {
        tensors.insert(format!("adam.v.{name}"), t.clone());
    }
    let mut ck = Checkpoint::new(kind, tensors);
    ck.config.extend(config);
    ck.step = opt.step;
    ck
}

/// Splits checkpoint tensors into the model names in `layout` and the
/// optimizer moments. Missing moments are zero-filled.
fn unpack(
    ck: &Checkpoint,
    layout: &[(String, Vec<usize>)],
) -> Result<(ParamStore<f32>, ParamStore<f32>, ParamStore<f32>)> {
    let mut params = ParamStore::new();
    let mut m = ParamStore::new();
    let mut v = ParamStore::new();
    for (name, shape) in layout {
        let t = ck.tensors.get(name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Shape(format!(
                "checkpoint tensor `{name}` is {:?}, the config expects {shape:?}",
                t.shape()
            )));
        }
        params.insert(name, t.clone());
        for (prefix, store) in [("adam.m.", &mut m), ("adam.v.", &mut v)] {
            let moment = match ck.tensors.get(&format!("{prefix}{name}")) {
                Ok(t) if t.shape() == shape.as_slice() => t.clone(),
                Ok(_) => return Err(Error::Shape(format!("optimizer moment for `{name}` has the wrong shape"))),
                Err(_) => Tensor::zeros(shape),
            };
            store.insert(name, moment);
        }
    }
    let model_tensors = ck.tensors.names().filter(|n| !n.starts_with("adam.")).count();
    if model_tensors != layout.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {model_tensors} model tensors, the config implies {}",
            layout.len()
        )));
    }
    Ok((params, m, v))
}

fn restore_adam(params: &ParamStore<f32>, m: ParamStore<f32>, v: ParamStore<f32>, lr: f64, clip: f64, step: u64) -> Adam<f32> {
    let mut opt = Adam::new(params, lr, Some(clip));
    opt.m = m;
    opt.v = v;
    opt.step = step;
    opt
}

/// Encoder parameters, optimizer state and the settings that produced them.
#[derive(Clone, Debug)]
pub struct EncoderTraining {
    pub config: RunConfig,
    pub params: EncoderParams<f32>,
    pub opt: Adam<f32>,
}

impl EncoderTraining {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let e = &config.encoder;
        e.validate()?;
        let params = EncoderParams::init(&e.model, &mut step_rng(config.seed, 0))?;
        let opt = Adam::new(&params.store, e.lr, Some(e.clip_norm));
        Ok(Self {
            config: config.clone(),
            params,
            opt,
        })
    }

    /// Completed update count.
    pub fn step_count(&self) -> u64 {
        self.opt.step
    }

    /// One GE2E update on a batch drawn by `sampler`; `features[i]` holds the
    /// features of manifest row `i`. Returns the loss before the update.
    pub fn step(&mut self, sampler: &Ge2eSampler, features: &[MelSpectrogram]) -> Result<f64> {
        let e = &self.config.encoder;
        let mut rng = step_rng(self.config.seed, self.opt.step + 1);
        let picks = sampler.draw(&mut rng);
        let batch = Ge2eBatch {
            speakers: sampler.speakers,
            utterances: sampler.utterances,
            features: picks
                .iter()
                .map(|&i| {
                    features
                        .get(i)
                        .cloned()
                        .ok_or_else(|| Error::Data(format!("no features for manifest row {i}")))
                })
                .collect::<Result<_>>()?,
        };
        train_encoder_step(&batch, &mut self.params, &mut self.opt, e.crop_frames, &mut rng)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        pack(ModelKind::Encoder, &self.params.store, &self.opt, self.config.encoder_entries())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Encoder {
            return Err(Error::KindMismatch {
                expected: ModelKind::Encoder.to_string(),
                found: ck.kind.to_string(),
            });
        }
        let config = RunConfig::from_entries(&ck.config)?;
        let e = &config.encoder;
        let (store, m, v) = unpack(ck, &e.model.layout()?)?;
        let params = EncoderParams::from_store(&e.model, store)?;
        let opt = restore_adam(&params.store, m, v, e.lr, e.clip_norm, ck.step);
        Ok(Self { config, params, opt })
    }
}

/// Vocoder parameters, optimizer state and the settings that produced them.
#[derive(Clone, Debug)]
pub struct VocoderTraining {
    pub config: RunConfig,
    pub params: VocoderParams<f32>,
    pub opt: Adam<f32>,
}

impl VocoderTraining {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let v = &config.vocoder;
        v.validate()?;
        let params = VocoderParams::init(&v.model, &mut step_rng(config.seed, 0))?;
        let opt = Adam::new(&params.store, v.lr, Some(v.clip_norm));
        Ok(Self {
            config: config.clone(),
            params,
            opt,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.opt.step
    }

    /// One teacher-forced update on random segments. Returns the loss before
    /// the update.
    pub fn step(&mut self, utterances: &[Utterance]) -> Result<f64> {
        let v = &self.config.vocoder;
        let mut rng = step_rng(self.config.seed, self.opt.step + 1);
        let batch = sample_segments(utterances, v.batch, v.segment_frames, &mut rng)?;
        train_vocoder_step(&batch, &mut self.params, &mut self.opt)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        pack(ModelKind::Vocoder, &self.params.store, &self.opt, self.config.vocoder_entries())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != ModelKind::Vocoder {
            return Err(Error::KindMismatch {
                expected: ModelKind::Vocoder.to_string(),
                found: ck.kind.to_string(),
            });
        }
        let config = RunConfig::from_entries(&ck.config)?;
        let v = &config.vocoder;
        let layout: Vec<(String, Vec<usize>)> = v.model.layout()?.into_iter().map(|(n, s, _)| (n, s)).collect();
        let (store, m, mo) = unpack(ck, &layout)?;
        let params = VocoderParams::from_store(&v.model, store)?;
        let opt = restore_adam(&params.store, m, mo, v.lr, v.clip_norm, ck.step);
        Ok(Self { config, params, opt })
    }
}
