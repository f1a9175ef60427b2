use super::mol::{mol_nll_graph, quantize};
use super::{VocoderConfig, VocoderParams};
use crate::dsp::{AudioClip, MelSpectrogram};
use crate::encoder::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::numerics::{BoundParams, Graph, Scalar, Tensor, Var};

/// Teacher-forcing example: `frames·hop` target samples, the mel frames
/// that condition them plus context on both sides, the sample just before
/// the segment and the speaker embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// `(frames + 2·context) × n_mels`, row-major.
    pub mels: Vec<f32>,
    pub audio: Vec<f32>,
    pub prev: f32,
    pub embedding: Vec<f32>,
}

/// Equal-length segments trained together.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentBatch {
    pub frames: usize,
    pub segments: Vec<Segment>,
}

impl SegmentBatch {
    fn validate(&self, cfg: &VocoderConfig) -> Result<()> {
        if self.segments.is_empty() || self.frames == 0 {
            return Err(Error::Data("empty segment batch".into()));
        }
        let window = (self.frames + 2 * cfg.context_frames()) * cfg.n_mels();
        for s in &self.segments {
            if s.mels.len() != window {
                return Err(Error::Shape(format!("segment mels have {} values, expected {window}", s.mels.len())));
            }
            if s.audio.len() != self.frames * cfg.hop() {
                return Err(Error::Shape(format!(
                    "segment has {} samples, {} frames need {}",
                    s.audio.len(),
                    self.frames,
                    self.frames * cfg.hop()
                )));
            }
            if s.embedding.len() != cfg.embedding_dim {
                return Err(Error::Shape(format!(
                    "embedding has {} dims, expected {}",
                    s.embedding.len(),
                    cfg.embedding_dim
                )));
            }
            if s.audio.iter().chain([&s.prev]).any(|v| !(v.abs() <= 1.0)) {
                return Err(Error::Domain("segment samples outside [-1, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Repeats the first and last frames `context` times on either side.
pub(crate) fn pad_frames(values: &[f32], frames: usize, n_mels: usize, context: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity((frames + 2 * context) * n_mels);
    for _ in 0..context {
        out.extend_from_slice(&values[..n_mels]);
    }
    out.extend_from_slice(values);
    for _ in 0..context {
        out.extend_from_slice(&values[(frames - 1) * n_mels..frames * n_mels]);
    }
    out
}

pub(crate) fn dense<T: Scalar>(g: &mut Graph<T>, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let y = g.matmul(x, p.var(&format!("{name}.w"))?)?;
    g.add(y, p.var(&format!("{name}.b"))?)
}

/// Conditioning network on frame rows `mels[W × n_mels]`: the per-sample
/// upsampled mels `[W·hop × n_mels]` and the per-frame latent `[W × 4R]`.
/// Log-mels are first mapped affinely so the floor lands on -1 and 0 dB on 1.
pub(crate) fn condition_graph<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cfg: &VocoderConfig,
    mels: Var,
) -> Result<(Var, Var)> {
    let mels = g.scale(mels, T::lit(2.0 / -cfg.mel.log_floor.ln()))?;
    let mels = g.add_scalar(mels, T::one())?;
    let x = g.unfold(mels, cfg.conv_kernel)?;
    let x = dense(g, p, "cond.in", x)?;
    let mut h = g.relu(x)?;
    for i in 0..cfg.residual_blocks {
        let a = dense(g, p, &format!("cond.res.{i}.a"), h)?;
        let a = g.relu(a)?;
        let b = dense(g, p, &format!("cond.res.{i}.b"), a)?;
        h = g.add(h, b)?;
    }
    let latent = dense(g, p, "cond.out", h)?;
    let mut up = mels;
    for (s, &f) in cfg.upsample_factors.iter().enumerate() {
        up = g.repeat_rows(up, f)?;
        up = g.smooth(up, p.var(&format!("up.{s}"))?)?;
    }
    Ok((up, latent))
}

/// One GRU step: gates in `r, z, n` order, `h' = n + z ⊙ (h - n)`.
pub(crate) fn gru_graph_step<T: Scalar>(
    g: &mut Graph<T>,
    gx: Var,
    h: Var,
    w_hh: Var,
    b_hh: Var,
    width: usize,
) -> Result<Var> {
    let gh = g.matmul(h, w_hh)?;
    let gh = g.add(gh, b_hh)?;
    let gx_rz = g.slice(gx, 1, 0, 2 * width)?;
    let gh_rz = g.slice(gh, 1, 0, 2 * width)?;
    let rz = g.add(gx_rz, gh_rz)?;
    let rz = g.sigmoid(rz)?;
    let r = g.slice(rz, 1, 0, width)?;
    let z = g.slice(rz, 1, width, width)?;
    let gx_n = g.slice(gx, 1, 2 * width, width)?;
    let gh_n = g.slice(gh, 1, 2 * width, width)?;
    let n = g.mul(r, gh_n)?;
    let n = g.add(gx_n, n)?;
    let n = g.tanh(n)?;
    let diff = g.sub(h, n)?;
    let gated = g.mul(z, diff)?;
    g.add(n, gated)
}

fn run_gru<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cell: &str,
    inputs: Var,
    steps: usize,
    batch: usize,
    width: usize,
) -> Result<Var> {
    let gx_all = dense(g, p, &format!("{cell}.ih"), inputs)?;
    let w_hh = p.var(&format!("{cell}.hh.w"))?;
    let b_hh = p.var(&format!("{cell}.hh.b"))?;
    let mut h = g.constant(Tensor::zeros(&[batch, width]));
    let mut outs = Vec::with_capacity(steps);
    for t in 0..steps {
        let gx = g.slice(gx_all, 0, t * batch, batch)?;
        h = gru_graph_step(g, gx, h, w_hh, b_hh, width)?;
        outs.push(h);
    }
    g.concat(&outs, 0)
}

/// Teacher-forced mean negative log-likelihood of a batch of segments.
/// Rows run time-major (`t·B + b`) so each recurrent step reads one
/// contiguous block.
pub fn vocoder_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cfg: &VocoderConfig,
    batch: &SegmentBatch,
) -> Result<Var> {
    cfg.validate()?;
    batch.validate(cfg)?;
    let b = batch.segments.len();
    let (m, r, hop) = (cfg.n_mels(), cfg.rnn_width, cfg.hop());
    let ctx = cfg.context_frames();
    let window = batch.frames + 2 * ctx;
    let steps = batch.frames * hop;

    let mels: Vec<T> = batch
        .segments
        .iter()
        .flat_map(|s| s.mels.iter().map(|&v| T::lit(v as f64)))
        .collect();
    let mels = g.constant(Tensor::new(&[b * window, m], mels)?);
    let (up, latent) = condition_graph(g, p, cfg, mels)?;

    // crop the context and reorder to time-major in one gather
    let mut sample_rows = Vec::with_capacity(steps * b);
    let mut frame_rows = Vec::with_capacity(steps * b);
    for t in 0..steps {
        for s in 0..b {
            sample_rows.push(s * window * hop + ctx * hop + t);
            frame_rows.push(s * window + ctx + t / hop);
        }
    }
    let cond = g.gather_rows(up, &sample_rows)?;
    let parts = g.gather_rows(latent, &frame_rows)?;
    let a: Vec<Var> = (0..4).map(|i| g.slice(parts, 1, i * r, r)).collect::<Result<_>>()?;

    let mut prev = Vec::with_capacity(steps * b);
    let mut targets = Vec::with_capacity(steps * b);
    for t in 0..steps {
        for s in &batch.segments {
            let y_prev = if t == 0 { s.prev } else { s.audio[t - 1] };
            prev.push(T::lit(y_prev as f64));
            targets.push(T::lit(quantize(s.audio[t] as f64, cfg.bits)));
        }
    }
    let prev = g.constant(Tensor::new(&[steps * b, 1], prev)?);
    let emb: Vec<T> = batch
        .segments
        .iter()
        .flat_map(|s| s.embedding.iter().map(|&v| T::lit(v as f64)))
        .collect();
    let emb = g.constant(Tensor::new(&[b, cfg.embedding_dim], emb)?);
    let emb_rows: Vec<usize> = (0..steps * b).map(|i| i % b).collect();
    let emb = g.gather_rows(emb, &emb_rows)?;

    let x = g.concat(&[prev, cond, a[0], emb], 1)?;
    let x = dense(g, p, "in", x)?;
    let h1 = run_gru(g, p, "gru1", x, steps, b, r)?;
    let u1 = g.add(h1, a[1])?;
    let h2 = run_gru(g, p, "gru2", u1, steps, b, r)?;
    let u2 = g.add(h2, a[2])?;
    let z = g.concat(&[u2, a[3]], 1)?;
    let z = dense(g, p, "fc1", z)?;
    let z = g.relu(z)?;
    let z = dense(g, p, "fc2", z)?;
    let z = g.relu(z)?;
    let head = dense(g, p, "head", z)?;
    mol_nll_graph(g, head, &targets, cfg.bits)
}

impl Segment {
    /// Segment from a clip whose length is `mel.frames()·hop`, with the
    /// edge frames replicated as context and silence before the first sample.
    pub fn from_clip(
        audio: &AudioClip,
        mel: &MelSpectrogram,
        embedding: &SpeakerEmbedding,
        cfg: &VocoderConfig,
    ) -> Result<Self> {
        if mel.config() != &cfg.mel {
            return Err(Error::Config("mel profile does not match the vocoder config".into()));
        }
        if audio.len() != mel.frames() * cfg.hop() {
            return Err(Error::Shape(format!(
                "segment has {} samples but {} frames need {}",
                audio.len(),
                mel.frames(),
                mel.frames() * cfg.hop()
            )));
        }
        Ok(Self {
            mels: pad_frames(mel.values(), mel.frames(), cfg.n_mels(), cfg.context_frames()),
            audio: audio.samples().to_vec(),
            prev: 0.0,
            embedding: embedding.values().iter().map(|&v| v as f32).collect(),
        })
    }
}

/// Teacher-forced loss of one aligned segment.
pub fn vocoder_loss<T: Scalar>(
    audio: &AudioClip,
    mel: &MelSpectrogram,
    embedding: &SpeakerEmbedding,
    params: &VocoderParams<T>,
) -> Result<f64> {
    let cfg = &params.config;
    let batch = SegmentBatch {
        frames: mel.frames(),
        segments: vec![Segment::from_clip(audio, mel, embedding, cfg)?],
    };
    let mut g = Graph::new();
    let bound = params.store.bind(&mut g, false);
    let loss = vocoder_loss_graph(&mut g, &bound, cfg, &batch)?;
    Ok(g.value(loss).item()?.as_f64())
}
