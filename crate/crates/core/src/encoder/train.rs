use rand::Rng;

use super::ge2e::{ge2e_loss_graph, similarity_graph};
use super::model::{encode_batch_graph, GE2E_B, GE2E_W};
use super::EncoderParams;
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::numerics::Graph;
use crate::trainer::Adam;

/// `speakers × utterances` feature sequences, speaker-major.
#[derive(Clone, Debug)]
pub struct Ge2eBatch {
    pub speakers: usize,
    pub utterances: usize,
    pub features: Vec<MelSpectrogram>,
}

impl Ge2eBatch {
    /// Cuts a random `frames`-long window out of every utterance; shorter
    /// utterances are padded with the log floor.
    pub fn crop(&self, frames: usize, rng: &mut impl Rng) -> Vec<Vec<f32>> {
        self.features
            .iter()
            .map(|m| {
                let n = m.n_mels();
                if m.frames() >= frames {
                    let start = rng.gen_range(0..=m.frames() - frames);
                    m.values()[start * n..(start + frames) * n].to_vec()
                } else {
                    let mut v = m.values().to_vec();
                    v.resize(frames * n, m.config().log_floor.ln() as f32);
                    v
                }
            })
            .collect()
    }
}

/// One GE2E update on a random crop of every utterance. Returns the batch
/// loss before the update. The scale `w` is kept positive afterwards.
pub fn train_encoder_step(
    batch: &Ge2eBatch,
    params: &mut EncoderParams<f32>,
    opt: &mut Adam<f32>,
    crop_frames: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if batch.features.len() != batch.speakers * batch.utterances {
        return Err(Error::Shape(format!(
            "{} utterances for a {}×{} batch",
            batch.features.len(),
            batch.speakers,
            batch.utterances
        )));
    }
    let windows = batch.crop(crop_frames, rng);
    let refs: Vec<&[f32]> = windows.iter().map(Vec::as_slice).collect();
    let mut g = Graph::<f32>::with_finite_checks(true);
    let bound = params.store.bind(&mut g, true);
    let e = encode_batch_graph(&mut g, &bound, &params.config, &refs, crop_frames)?;
    let sm = similarity_graph(
        &mut g,
        e,
        bound.var(GE2E_W)?,
        bound.var(GE2E_B)?,
        batch.speakers,
        batch.utterances,
    )?;
    let loss = ge2e_loss_graph(&mut g, sm, batch.speakers, batch.utterances)?;
    let value = g.value(loss).item()? as f64;
    let grads = g.backward(loss)?;
    let grads = bound.gradients(&params.store, &grads);
    opt.update(&mut params.store, &grads)?;
    let w = params.store.get_mut(GE2E_W)?;
    w.data_mut()[0] = w.data()[0].max(1e-6);
    Ok(value)
}
