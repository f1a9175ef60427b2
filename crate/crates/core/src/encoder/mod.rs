//! GE2E speaker encoder: stacked LSTM summarizer with a linear projection to
//! a unit-norm embedding, the scaled-cosine similarity matrix and the
//! generalized end-to-end loss.

mod eer;
mod embed;
mod ge2e;
mod model;
mod train;

pub use eer::eer;
pub use embed::{embed_utterance, pool_embeddings, WindowConfig};
pub use ge2e::{ge2e_loss, ge2e_loss_graph, similarity_graph, similarity_matrix, Ge2eParams, SimilarityMatrix};
pub use model::{encode_batch_graph, encode_window, encode_windows, EncoderConfig, EncoderParams};
pub use train::{train_encoder_step, Ge2eBatch};

use crate::error::{Error, Result};

/// Unit-L2-norm speaker embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding(Vec<f64>);

impl SpeakerEmbedding {
    /// Normalizes `v` to unit length.
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Data("cannot normalize a zero or non-finite embedding".into()));
        }
        Ok(Self(v.into_iter().map(|x| x / norm).collect()))
    }

    /// Wraps a vector that is already unit-norm (within 1e-6).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Data(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot / (self.norm() * other.norm())
    }
}
