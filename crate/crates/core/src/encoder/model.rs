use rand::Rng;

use super::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::numerics::{BoundParams, Graph, ParamStore, Scalar, Tensor, Var};

/// Shape of the recurrent summarizer.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub n_mels: usize,
    pub layers: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
}

impl EncoderConfig {
    /// Three LSTM layers of 768 cells projected to 256 dimensions.
    pub fn full() -> Self {
        Self {
            n_mels: 40,
            layers: 3,
            hidden: 768,
            embedding_dim: 256,
        }
    }

    /// Desk-scale default that trains in minutes on a CPU.
    pub fn desk() -> Self {
        Self {
            n_mels: 40,
            layers: 2,
            hidden: 128,
            embedding_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.layers == 0 || self.hidden == 0 || self.embedding_dim == 0 {
            return Err(Error::Config(format!("degenerate encoder config {self:?}")));
        }
        Ok(())
    }

    /// Parameter names and shapes in store order.
    pub fn layout(&self) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let h = self.hidden;
        let mut out = Vec::new();
        for l in 0..self.layers {
            let input = if l == 0 { self.n_mels } else { h };
            out.push((format!("lstm.{l}.w_ih"), vec![input, 4 * h]));
            out.push((format!("lstm.{l}.w_hh"), vec![h, 4 * h]));
            out.push((format!("lstm.{l}.b"), vec![4 * h]));
        }
        out.push(("proj.w".into(), vec![h, self.embedding_dim]));
        out.push(("proj.b".into(), vec![self.embedding_dim]));
        out.push((GE2E_W.into(), vec![1]));
        out.push((GE2E_B.into(), vec![1]));
        Ok(out)
    }
}

/// Encoder weights plus the GE2E scale `w` and offset `b`, all in one store
/// so a single optimizer and checkpoint cover them.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub store: ParamStore<T>,
}

pub(crate) const GE2E_W: &str = "ge2e.w";
pub(crate) const GE2E_B: &str = "ge2e.b";

impl<T: Scalar> EncoderParams<T> {
    /// Uniform `±1/sqrt(hidden)` initialization; `w = 10`, `b = -5`.
    pub fn init(config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (config.hidden as f64).sqrt();
        let mut store = ParamStore::new();
        for (name, shape) in config.layout()? {
            let t = match name.as_str() {
                GE2E_W => Tensor::from_vec(vec![T::lit(10.0)]),
                GE2E_B => Tensor::from_vec(vec![T::lit(-5.0)]),
                _ => Tensor::from_fn(&shape, |_| T::lit(rng.gen_range(-bound..bound))),
            };
            store.insert(name, t);
        }
        Ok(Self {
            config: config.clone(),
            store,
        })
    }

    /// Wraps an existing store after checking it has the layout `config` implies.
    pub fn from_store(config: &EncoderConfig, store: ParamStore<T>) -> Result<Self> {
        let layout = config.layout()?;
        let matches = layout.len() == store.len()
            && layout
                .iter()
                .zip(store.iter())
                .all(|((n, s), (m, t))| n == m && s.as_slice() == t.shape());
        if !matches {
            return Err(Error::Shape(format!(
                "parameter layout does not match encoder config {config:?}"
            )));
        }
        Ok(Self {
            config: config.clone(),
            store,
        })
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        EncoderParams {
            config: self.config.clone(),
            store: self.store.cast(),
        }
    }
}

/// Subtracts the mean over every cell of a window; a gain change of the
/// input audio only shifts log-mel values, so this removes it.
pub(crate) fn normalize_window<T: Scalar>(features: &[f32]) -> Vec<T> {
    let mean = features.iter().map(|&v| v as f64).sum::<f64>() / features.len().max(1) as f64;
    features.iter().map(|&v| T::lit(v as f64 - mean)).collect()
}

/// Row-wise L2 normalization.
pub(crate) fn l2_normalize_rows<T: Scalar>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let sq = g.square(x)?;
    let ss = g.sum(sq, Some(1))?;
    let ss = g.add_scalar(ss, T::lit(1e-16))?;
    let norm = g.sqrt(ss)?;
    g.div(x, norm)
}

/// Runs the encoder over `windows` (each `frames × n_mels`, row-major, all the
/// same length) and returns the `[windows, embedding_dim]` unit-norm rows.
pub fn encode_batch_graph<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    cfg: &EncoderConfig,
    windows: &[&[f32]],
    frames: usize,
) -> Result<Var> {
    let b = windows.len();
    if b == 0 || frames == 0 {
        return Err(Error::Data("empty feature sequence".into()));
    }
    let n = cfg.n_mels;
    let normalized: Vec<Vec<T>> = windows
        .iter()
        .map(|w| {
            if w.len() != frames * n {
                return Err(Error::Shape(format!(
                    "window has {} values, expected {frames}×{n}",
                    w.len()
                )));
            }
            Ok(normalize_window(w))
        })
        .collect::<Result<_>>()?;
    // time-major: row t·B + b holds frame t of window b
    let mut x = Vec::with_capacity(frames * b * n);
    for t in 0..frames {
        for w in &normalized {
            x.extend_from_slice(&w[t * n..(t + 1) * n]);
        }
    }
    let mut input = g.constant(Tensor::new(&[frames * b, n], x)?);
    let h = cfg.hidden;
    let mut last = None;
    for l in 0..cfg.layers {
        let w_ih = p.var(&format!("lstm.{l}.w_ih"))?;
        let w_hh = p.var(&format!("lstm.{l}.w_hh"))?;
        let bias = p.var(&format!("lstm.{l}.b"))?;
        let pre = g.matmul(input, w_ih)?;
        let pre = g.add(pre, bias)?;
        let mut hs = g.constant(Tensor::zeros(&[b, h]));
        let mut cs = g.constant(Tensor::zeros(&[b, h]));
        let mut outputs = Vec::with_capacity(frames);
        for t in 0..frames {
            let xt = g.slice(pre, 0, t * b, b)?;
            let rec = g.matmul(hs, w_hh)?;
            let gates = g.add(xt, rec)?;
            let i = g.slice(gates, 1, 0, h)?;
            let f = g.slice(gates, 1, h, h)?;
            let c_hat = g.slice(gates, 1, 2 * h, h)?;
            let o = g.slice(gates, 1, 3 * h, h)?;
            let i = g.sigmoid(i)?;
            let f = g.sigmoid(f)?;
            let c_hat = g.tanh(c_hat)?;
            let o = g.sigmoid(o)?;
            let keep = g.mul(f, cs)?;
            let write = g.mul(i, c_hat)?;
            cs = g.add(keep, write)?;
            let squashed = g.tanh(cs)?;
            hs = g.mul(o, squashed)?;
            outputs.push(hs);
        }
        last = Some(hs);
        if l + 1 < cfg.layers {
            input = g.concat(&outputs, 0)?;
        }
    }
    let top = last.expect("at least one layer");
    let proj = g.matmul(top, p.var("proj.w")?)?;
    let proj = g.add(proj, p.var("proj.b")?)?;
    l2_normalize_rows(g, proj)
}

/// Embeds equal-length windows with frozen parameters.
pub fn encode_windows<T: Scalar>(
    windows: &[&[f32]],
    frames: usize,
    params: &EncoderParams<T>,
) -> Result<Vec<SpeakerEmbedding>> {
    let mut g = Graph::new();
    let bound = params.store.bind(&mut g, false);
    let out = encode_batch_graph(&mut g, &bound, &params.config, windows, frames)?;
    let e = g.value(out);
    let d = params.config.embedding_dim;
    (0..windows.len())
        .map(|i| SpeakerEmbedding::normalized(e.data()[i * d..(i + 1) * d].iter().map(|v| v.as_f64()).collect()))
        .collect()
}

/// Embedding of one window of features (`frames × n_mels`): the projection
/// of the top layer's state after the last frame, L2-normalized.
pub fn encode_window<T: Scalar>(
    features: &[f32],
    frames: usize,
    params: &EncoderParams<T>,
) -> Result<SpeakerEmbedding> {
    Ok(encode_windows(&[features], frames, params)?.remove(0))
}
