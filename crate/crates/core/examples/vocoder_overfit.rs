//! Overfits the micro vocoder to one two-second harmonic clip, then compares
//! copy-synthesis against a randomly initialized model.
//!
//!     cargo run --release --example vocoder_overfit -- [steps] [lr] [batch] [segment_frames]

use std::time::Instant;

use scwr::config::RunConfig;
use scwr::corpus::{harmonic_utterance, speaker_code};
use scwr::dsp::mel_spectrogram;
use scwr::trainer::{mel_l1, VocoderTraining};
use scwr::vocoder::{synthesize, Utterance};

fn main() -> scwr::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize| args.get(i).map(String::as_str);
    let mut cfg = RunConfig::desk();
    cfg.seed = 3;
    if let Some(v) = arg(1) {
        cfg.set("vocoder.steps", v)?;
    }
    if let Some(v) = arg(2) {
        cfg.set("vocoder.lr", v)?;
    }
    if let Some(v) = arg(3) {
        cfg.set("vocoder.batch", v)?;
    }
    if let Some(v) = arg(4) {
        cfg.set("vocoder.segment_frames", v)?;
    }
    let model = cfg.vocoder.model.clone();
    let clip = harmonic_utterance(140.0, 1.0, 2.0, model.mel.sample_rate, 11);
    let code = speaker_code(0, model.embedding_dim);
    let utts = [Utterance::new(clip.clone(), code.clone(), &model)?];

    let mut run = VocoderTraining::new(&cfg)?;
    let init = run.params.clone();
    let t0 = Instant::now();
    let mut losses = Vec::new();
    for step in 1..=cfg.vocoder.steps {
        let loss = run.step(&utts)?;
        losses.push(loss);
        if step % 100 == 0 || step == 1 {
            println!("step {step:5}  loss {loss:.4}");
        }
    }
    let tail = &losses[losses.len().saturating_sub(50)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
    println!(
        "initial {:.4}  final(mean of last {}) {:.4}  ratio {:.3}  {:.1}s",
        losses[0],
        tail.len(),
        final_loss,
        final_loss / losses[0],
        t0.elapsed().as_secs_f64()
    );

    let mel = mel_spectrogram(&clip, &model.mel)?;
    let trained = synthesize(&mel, &code, &run.params, 7)?;
    let baseline = synthesize(&mel, &code, &init, 7)?;
    println!(
        "copy-synthesis mel-L1: trained {:.4}  random init {:.4}  ({:.0} samples/s)",
        mel_l1(&trained.clip, &clip)?,
        mel_l1(&baseline.clip, &clip)?,
        trained.samples_per_second()
    );
    Ok(())
}
