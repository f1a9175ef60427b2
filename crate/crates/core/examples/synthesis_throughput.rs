//! Samples per second of autoregressive synthesis for the full-size and
//! desk-size vocoders (random weights; speed does not depend on training).
//!
//!     cargo run --release --example synthesis_throughput -- [frames]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scwr::config::RunConfig;
use scwr::corpus::speaker_code;
use scwr::dsp::MelSpectrogram;
use scwr::vocoder::{synthesize, VocoderParams};

fn main() -> scwr::Result<()> {
    let frames: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    for (name, cfg) in [("full", RunConfig::full()), ("desk", RunConfig::desk())] {
        let model = cfg.vocoder.model;
        let params = VocoderParams::<f32>::init(&model, &mut ChaCha8Rng::seed_from_u64(0))?;
        let values = (0..frames * model.n_mels()).map(|i| -4.0 + (i % 9) as f32 * 0.3).collect();
        let mel = MelSpectrogram::new(values, frames, model.mel.clone())?;
        let out = synthesize(&mel, &speaker_code(0, model.embedding_dim), &params, 1)?;
        println!(
            "{name}: {} samples ({} frames × hop {}) in {:.3} s, {:.0} samples/sec, {:.3}× real time",
            out.clip.len(),
            frames,
            model.hop(),
            out.seconds,
            out.samples_per_second(),
            out.samples_per_second() / model.mel.sample_rate as f64
        );
    }
    Ok(())
}
