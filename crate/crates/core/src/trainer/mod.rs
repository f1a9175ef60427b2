//! Optimization, checkpoints, data plumbing and evaluation shared by both
//! models.

mod checkpoint;
mod data;
mod eval;
mod gradcheck;
mod loops;
mod optim;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_kind, load_mel_record, save_checkpoint, save_mel_record, write_atomic,
    Checkpoint, ModelKind, CHECKPOINT_VERSION,
};
pub use data::{make_ge2e_batches, EmbeddingTable, Ge2eBatches, Ge2eSampler, Manifest, ManifestRow};
pub use eval::{mel_l1, mel_l1_with};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use loops::{step_rng, EncoderTraining, VocoderTraining};
pub use optim::{global_norm, Adam};
