//! Speaker-conditional WaveRNN: a residual conditioning network and a
//! three-stage upsampler feed two GRUs whose output parameterizes a
//! discretized mixture of logistics over the next sample.

mod infer;
mod mol;
mod net;
mod train;

pub use infer::{condition, step, synthesize, ConditioningFeatures, RecurrentState, Synthesis};
pub use mol::{bin_width, mol_log_prob, quantize, sample_mol, MixtureParams, LOG_SCALE_MIN, SAMPLE_EPS};
pub use net::{vocoder_loss, vocoder_loss_graph, Segment, SegmentBatch};
pub use train::{sample_segments, train_vocoder_step, Utterance};

use rand::Rng;

use crate::dsp::MelConfig;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Scalar, Tensor};

/// Shape of the vocoder. The mel hop must equal the product of the three
/// upsampling factors.
#[derive(Clone, Debug, PartialEq)]
pub struct VocoderConfig {
    pub mel: MelConfig,
    pub upsample_factors: [usize; 3],
    /// Frames seen by the input convolution of the conditioning network (odd).
    pub conv_kernel: usize,
    pub residual_blocks: usize,
    pub conditioning_channels: usize,
    pub rnn_width: usize,
    pub fc_width: usize,
    /// Mixture components `K`.
    pub mixtures: usize,
    pub bits: u32,
    pub embedding_dim: usize,
}

impl VocoderConfig {
    /// 16 kHz, hop 200 = 5·5·8, 512-wide recurrent core, 10 components, 16 bits.
    pub fn full() -> Self {
        Self {
            mel: MelConfig::vocoder(),
            upsample_factors: [5, 5, 8],
            conv_kernel: 7,
            residual_blocks: 10,
            conditioning_channels: 128,
            rnn_width: 512,
            fc_width: 512,
            mixtures: 10,
            bits: 16,
            embedding_dim: 256,
        }
    }

    /// Desk-scale model: hop 16, 24-wide core, 8-bit output.
    pub fn micro() -> Self {
        Self {
            mel: MelConfig {
                sample_rate: 16_000,
                n_fft: 64,
                win_length: 64,
                hop_length: 16,
                n_mels: 16,
                fmin: 40.0,
                fmax: 8_000.0,
                log_floor: 1e-5,
            },
            upsample_factors: [2, 2, 4],
            conv_kernel: 7,
            residual_blocks: 2,
            conditioning_channels: 24,
            rnn_width: 24,
            fc_width: 24,
            mixtures: 4,
            bits: 8,
            embedding_dim: 256,
        }
    }

    /// Smallest useful model for finite-difference checks: hop 4, width 8.
    pub fn tiny() -> Self {
        Self {
            mel: MelConfig {
                sample_rate: 16_000,
                n_fft: 16,
                win_length: 8,
                hop_length: 4,
                n_mels: 6,
                fmin: 0.0,
                fmax: 8_000.0,
                log_floor: 1e-5,
            },
            upsample_factors: [1, 2, 2],
            conv_kernel: 5,
            residual_blocks: 1,
            conditioning_channels: 8,
            rnn_width: 8,
            fc_width: 8,
            mixtures: 2,
            bits: 8,
            embedding_dim: 4,
        }
    }

    pub fn hop(&self) -> usize {
        self.upsample_factors.iter().product()
    }

    pub fn n_mels(&self) -> usize {
        self.mel.n_mels
    }

    /// Frames of context kept on each side of a training segment so that its
    /// conditioning matches the whole-utterance computation exactly.
    pub fn context_frames(&self) -> usize {
        (self.conv_kernel / 2).max(2)
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.upsample_factors.contains(&0) {
            return bad("upsampling factors must be positive".into());
        }
        if self.hop() != self.mel.hop_length {
            return bad(format!(
                "upsampling factors {:?} give hop {}, mel hop is {}",
                self.upsample_factors,
                self.hop(),
                self.mel.hop_length
            ));
        }
        if self.conv_kernel % 2 == 0 {
            return bad(format!("conv_kernel must be odd, got {}", self.conv_kernel));
        }
        if self.mixtures == 0 {
            return bad("need at least one mixture component".into());
        }
        if !(8..=16).contains(&self.bits) {
            return bad(format!("bits must be in [8, 16], got {}", self.bits));
        }
        if self.conditioning_channels == 0 || self.rnn_width == 0 || self.fc_width == 0 || self.embedding_dim == 0 {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    /// Parameter names, shapes and fan-in, in store order. A fan-in of 0
    /// marks an upsampler kernel.
    pub fn layout(&self) -> Result<Vec<(String, Vec<usize>, usize)>> {
        self.validate()?;
        let (m, c, r, f, k, e) = (
            self.n_mels(),
            self.conditioning_channels,
            self.rnn_width,
            self.fc_width,
            self.mixtures,
            self.embedding_dim,
        );
        let mut out: Vec<(String, Vec<usize>, usize)> = Vec::new();
        let mut dense = |name: &str, fan_in: usize, width: usize| {
            out.push((format!("{name}.w"), vec![fan_in, width], fan_in));
            out.push((format!("{name}.b"), vec![width], fan_in));
        };
        dense("cond.in", self.conv_kernel * m, c);
        for i in 0..self.residual_blocks {
            dense(&format!("cond.res.{i}.a"), c, c);
            dense(&format!("cond.res.{i}.b"), c, c);
        }
        dense("cond.out", c, 4 * r);
        dense("in", 1 + m + r + e, r);
        for cell in ["gru1", "gru2"] {
            dense(&format!("{cell}.ih"), r, 3 * r);
            dense(&format!("{cell}.hh"), r, 3 * r);
        }
        dense("fc1", 2 * r, f);
        dense("fc2", f, f);
        dense("head", f, 3 * k);
        for (s, &factor) in self.upsample_factors.iter().enumerate() {
            out.push((format!("up.{s}"), vec![2 * factor + 1], 0));
        }
        Ok(out)
    }
}

/// All vocoder weights, keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct VocoderParams<T> {
    pub config: VocoderConfig,
    pub store: ParamStore<T>,
}

impl<T: Scalar> VocoderParams<T> {
    /// Uniform `±1/sqrt(fan_in)` weights and biases; smoothing kernels start
    /// as moving averages.
    pub fn init(config: &VocoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        for (name, shape, fan_in) in config.layout()? {
            let t = if fan_in == 0 {
                Tensor::full(&shape, T::lit(1.0 / shape[0] as f64))
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| T::lit(rng.gen_range(-bound..bound)))
            };
            store.insert(name, t);
        }
        Ok(Self {
            config: config.clone(),
            store,
        })
    }

    /// Every weight zero, smoothing kernels averaging.
    pub fn zeros(config: &VocoderConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        for (name, shape, fan_in) in config.layout()? {
            let v = if fan_in == 0 { 1.0 / shape[0] as f64 } else { 0.0 };
            store.insert(name, Tensor::full(&shape, T::lit(v)));
        }
        Ok(Self {
            config: config.clone(),
            store,
        })
    }

    pub fn from_store(config: &VocoderConfig, store: ParamStore<T>) -> Result<Self> {
        let layout = config.layout()?;
        let matches = layout.len() == store.len()
            && layout
                .iter()
                .zip(store.iter())
                .all(|((n, s, _), (m, t))| n == m && s.as_slice() == t.shape());
        if !matches {
            return Err(Error::Shape(format!(
                "parameter layout does not match vocoder config {config:?}"
            )));
        }
        Ok(Self {
            config: config.clone(),
            store,
        })
    }

    pub fn cast<U: Scalar>(&self) -> VocoderParams<U> {
        VocoderParams {
            config: self.config.clone(),
            store: self.store.cast(),
        }
    }
}
