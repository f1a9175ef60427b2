use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mol::{sample_mol, MixtureParams};
use super::net::{condition_graph, pad_frames};
use super::{VocoderConfig, VocoderParams};
use crate::dsp::{AudioClip, MelSpectrogram};
use crate::encoder::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::numerics::kernels::{matmul, sigmoid, vecmat_acc};
use crate::numerics::{Graph, Scalar, Tensor};

/// Output of the conditioning network for a whole utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningFeatures<T> {
    /// Upsampled mels, `[frames·hop × n_mels]`.
    pub cond: Tensor<T>,
    /// Per-frame latent `[frames × 4R]`, split into `a1..a4` by columns.
    pub latent: Tensor<T>,
    hop: usize,
    width: usize,
}

impl<T: Scalar> ConditioningFeatures<T> {
    pub fn samples(&self) -> usize {
        self.cond.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.latent.shape()[0]
    }

    pub fn cond_row(&self, t: usize) -> &[T] {
        self.cond.row(t)
    }

    /// Latent part `i` (0-based, so `a1` is part 0) broadcast to sample `t`.
    pub fn part(&self, i: usize, t: usize) -> &[T] {
        &self.latent.row(t / self.hop)[i * self.width..(i + 1) * self.width]
    }
}

fn check_profile(mel: &MelSpectrogram, cfg: &VocoderConfig) -> Result<()> {
    if mel.config() != &cfg.mel {
        return Err(Error::Config(format!(
            "mel profile {:?} does not match the vocoder profile {:?}",
            mel.config(),
            cfg.mel
        )));
    }
    Ok(())
}

/// Runs the conditioning network and upsampler over a whole utterance.
pub fn condition<T: Scalar>(mel: &MelSpectrogram, params: &VocoderParams<T>) -> Result<ConditioningFeatures<T>> {
    let cfg = &params.config;
    cfg.validate()?;
    check_profile(mel, cfg)?;
    let (frames, m, hop, ctx) = (mel.frames(), cfg.n_mels(), cfg.hop(), cfg.context_frames());
    let padded: Vec<T> = pad_frames(mel.values(), frames, m, ctx)
        .into_iter()
        .map(|v| T::lit(v as f64))
        .collect();
    let mut g = Graph::new();
    let bound = params.store.bind(&mut g, false);
    let x = g.constant(Tensor::new(&[frames + 2 * ctx, m], padded)?);
    let (up, latent) = condition_graph(&mut g, &bound, cfg, x)?;
    let up = g.slice(up, 0, ctx * hop, frames * hop)?;
    let latent = g.slice(latent, 0, ctx, frames)?;
    Ok(ConditioningFeatures {
        cond: g.value(up).clone(),
        latent: g.value(latent).clone(),
        hop,
        width: cfg.rnn_width,
    })
}

/// Hidden vectors of the two GRUs.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState<T> {
    pub h1: Vec<T>,
    pub h2: Vec<T>,
}

impl<T: Scalar> RecurrentState<T> {
    pub fn zeros(width: usize) -> Self {
        Self {
            h1: vec![T::zero(); width],
            h2: vec![T::zero(); width],
        }
    }
}

struct Weights<'a, T> {
    w_in: &'a [T],
    b_in: &'a [T],
    ih1: (&'a [T], &'a [T]),
    hh1: (&'a [T], &'a [T]),
    ih2: (&'a [T], &'a [T]),
    hh2: (&'a [T], &'a [T]),
    fc1: (&'a [T], &'a [T]),
    fc2: (&'a [T], &'a [T]),
    head: (&'a [T], &'a [T]),
}

impl<'a, T: Scalar> Weights<'a, T> {
    fn new(p: &'a VocoderParams<T>) -> Result<Self> {
        let get = |n: &str| p.store.get(n).map(|t| t.data());
        let pair = |n: &str| -> Result<(&'a [T], &'a [T])> { Ok((get(&format!("{n}.w"))?, get(&format!("{n}.b"))?)) };
        Ok(Self {
            w_in: get("in.w")?,
            b_in: get("in.b")?,
            ih1: pair("gru1.ih")?,
            hh1: pair("gru1.hh")?,
            ih2: pair("gru2.ih")?,
            hh2: pair("gru2.hh")?,
            fc1: pair("fc1")?,
            fc2: pair("fc2")?,
            head: pair("head")?,
        })
    }
}

/// GRU update given the input gate pre-activations `gx` (bias included).
fn gru_cell<T: Scalar>(gx: &[T], h: &[T], hh: (&[T], &[T]), gh: &mut [T], out: &mut [T]) {
    let r = h.len();
    gh.copy_from_slice(hh.1);
    vecmat_acc(h, hh.0, gh);
    for j in 0..r {
        let rg = sigmoid(gx[j] + gh[j]);
        let z = sigmoid(gx[r + j] + gh[r + j]);
        let n = (gx[2 * r + j] + rg * gh[2 * r + j]).tanh();
        out[j] = n + z * (h[j] - n);
    }
}

struct Scratch<T> {
    gx: Vec<T>,
    gh: Vec<T>,
    u: Vec<T>,
    z: Vec<T>,
    f1: Vec<T>,
    f2: Vec<T>,
    head: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(cfg: &VocoderConfig) -> Self {
        let (r, f) = (cfg.rnn_width, cfg.fc_width);
        Self {
            gx: vec![T::zero(); 3 * r],
            gh: vec![T::zero(); 3 * r],
            u: vec![T::zero(); r],
            z: vec![T::zero(); 2 * r],
            f1: vec![T::zero(); f],
            f2: vec![T::zero(); f],
            head: vec![T::zero(); 3 * cfg.mixtures],
        }
    }
}

fn dense_relu<T: Scalar>(x: &[T], layer: (&[T], &[T]), out: &mut [T]) {
    out.copy_from_slice(layer.1);
    vecmat_acc(x, layer.0, out);
    for v in out.iter_mut() {
        *v = v.max(T::zero());
    }
}

/// Everything after the first GRU's input gates: both cells, the skip
/// additions and the output stack. Leaves the head in `s.head`.
fn core<T: Scalar>(
    w: &Weights<'_, T>,
    gx1: &[T],
    a: [&[T]; 4],
    state: &mut RecurrentState<T>,
    s: &mut Scratch<T>,
) {
    let r = state.h1.len();
    let mut h = vec![T::zero(); r];
    gru_cell(gx1, &state.h1, w.hh1, &mut s.gh, &mut h);
    state.h1.copy_from_slice(&h);
    for j in 0..r {
        s.u[j] = h[j] + a[1][j];
    }
    s.gx.copy_from_slice(w.ih2.1);
    vecmat_acc(&s.u, w.ih2.0, &mut s.gx);
    gru_cell(&s.gx, &state.h2, w.hh2, &mut s.gh, &mut h);
    state.h2.copy_from_slice(&h);
    for j in 0..r {
        s.z[j] = h[j] + a[2][j];
        s.z[r + j] = a[3][j];
    }
    dense_relu(&s.z, w.fc1, &mut s.f1);
    dense_relu(&s.f1, w.fc2, &mut s.f2);
    s.head.copy_from_slice(w.head.1);
    vecmat_acc(&s.f2, w.head.0, &mut s.head);
}

/// One autoregressive step: `[y_prev, cond_t, a1_t, e]` → affine → GRU1
/// (+a2) → GRU2 (+a3) → `[·, a4]` → two ReLU layers → mixture head.
pub fn step<T: Scalar>(
    y_prev: T,
    cond_t: &[T],
    a: [&[T]; 4],
    e: &[T],
    state: &RecurrentState<T>,
    params: &VocoderParams<T>,
) -> Result<(MixtureParams<T>, RecurrentState<T>)> {
    let cfg = &params.config;
    let r = cfg.rnn_width;
    if cond_t.len() != cfg.n_mels()
        || a.iter().any(|p| p.len() != r)
        || e.len() != cfg.embedding_dim
        || state.h1.len() != r
        || state.h2.len() != r
    {
        return Err(Error::Shape("step inputs do not match the vocoder config".into()));
    }
    let w = Weights::new(params)?;
    let mut input = Vec::with_capacity(1 + cond_t.len() + r + e.len());
    input.push(y_prev);
    input.extend_from_slice(cond_t);
    input.extend_from_slice(a[0]);
    input.extend_from_slice(e);
    let mut x = w.b_in.to_vec();
    vecmat_acc(&input, w.w_in, &mut x);
    let mut gx1 = w.ih1.1.to_vec();
    vecmat_acc(&x, w.ih1.0, &mut gx1);
    let mut next = state.clone();
    let mut s = Scratch::new(cfg);
    core(&w, &gx1, a, &mut next, &mut s);
    Ok((MixtureParams::from_head(&s.head)?, next))
}

/// Generated audio and how long the sample loop took.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub clip: AudioClip,
    pub seconds: f64,
}

impl Synthesis {
    pub fn samples_per_second(&self) -> f64 {
        self.clip.len() as f64 / self.seconds.max(1e-9)
    }
}

const CHUNK: usize = 4096;

/// Autoregressive generation of `frames·hop` samples starting from silence.
/// The same seed always gives the same waveform.
pub fn synthesize<T: Scalar>(
    mel: &MelSpectrogram,
    embedding: &SpeakerEmbedding,
    params: &VocoderParams<T>,
    seed: u64,
) -> Result<Synthesis> {
    let cfg = &params.config;
    if embedding.dim() != cfg.embedding_dim {
        return Err(Error::Shape(format!(
            "embedding has {} dims, the vocoder expects {}",
            embedding.dim(),
            cfg.embedding_dim
        )));
    }
    let start = Instant::now();
    let feats = condition(mel, params)?;
    let w = Weights::new(params)?;
    let (m, r) = (cfg.n_mels(), cfg.rnn_width);
    let e: Vec<T> = embedding.values().iter().map(|&v| T::lit(v)).collect();

    // The input affine and GRU1's input gates are linear in [y, cond, a1, e],
    // so everything except the y_prev term is computed in blocks.
    let e_rows = &w.w_in[(1 + m + r) * r..];
    let mut base = w.b_in.to_vec();
    vecmat_acc(&e, e_rows, &mut base);
    let w_mid = &w.w_in[r..(1 + m + r) * r];
    let mut y_gate = w.ih1.1.iter().map(|_| T::zero()).collect::<Vec<_>>();
    vecmat_acc(&w.w_in[..r], w.ih1.0, &mut y_gate);

    let total = feats.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = RecurrentState::zeros(r);
    let mut scratch = Scratch::new(cfg);
    let mut out = Vec::with_capacity(total);
    let mut y = T::zero();
    let mut gx1 = vec![T::zero(); 3 * r];
    for chunk_start in (0..total).step_by(CHUNK) {
        let n = CHUNK.min(total - chunk_start);
        let mut rows = Vec::with_capacity(n * (m + r));
        for t in chunk_start..chunk_start + n {
            rows.extend_from_slice(feats.cond_row(t));
            rows.extend_from_slice(feats.part(0, t));
        }
        let mut x = matmul(&rows, w_mid, n, m + r, r);
        for row in x.chunks_mut(r) {
            for (v, b) in row.iter_mut().zip(&base) {
                *v = *v + *b;
            }
        }
        let gates = matmul(&x, w.ih1.0, n, r, 3 * r);
        for i in 0..n {
            let t = chunk_start + i;
            let g = &gates[i * 3 * r..(i + 1) * 3 * r];
            for j in 0..3 * r {
                gx1[j] = g[j] + w.ih1.1[j] + y * y_gate[j];
            }
            let a = [feats.part(0, t), feats.part(1, t), feats.part(2, t), feats.part(3, t)];
            core(&w, &gx1, a, &mut state, &mut scratch);
            let mp = MixtureParams::from_head(&scratch.head)?;
            y = sample_mol(&mp, &mut rng);
            out.push(y.as_f64() as f32);
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(Synthesis {
        clip: AudioClip::new(out, cfg.mel.sample_rate)?,
        seconds,
    })
}
