//! Trains the desk encoder for a few steps, writes a checkpoint, resumes
//! from it and shows that the resumed run matches an uninterrupted one.
//!
//!     cargo run --release --example checkpoint_resume

use scwr::config::RunConfig;
use scwr::corpus::{corpus_manifest, noise_corpus};
use scwr::trainer::{load_checkpoint, save_checkpoint, EncoderTraining, Ge2eSampler};

fn main() -> scwr::Result<()> {
    let cfg = RunConfig::desk();
    let items = noise_corpus(4, 3, 2.0, 7);
    let sampler = Ge2eSampler::new(&corpus_manifest(&items)?, cfg.encoder.speakers, cfg.encoder.utterances)?;
    let features = items
        .iter()
        .map(|i| cfg.encoder.window.features(&i.clip))
        .collect::<scwr::Result<Vec<_>>>()?;

    let mut straight = EncoderTraining::new(&cfg)?;
    for _ in 0..6 {
        straight.step(&sampler, &features)?;
    }

    let path = std::env::temp_dir().join("scwr_resume_demo.ckpt");
    let mut first = EncoderTraining::new(&cfg)?;
    for _ in 0..3 {
        first.step(&sampler, &features)?;
    }
    save_checkpoint(&first.checkpoint(), &path)?;
    let loaded = load_checkpoint(&path)?;
    println!(
        "{} bytes, {:?} at step {}, {} tensors",
        std::fs::metadata(&path)?.len(),
        loaded.kind,
        loaded.step,
        loaded.tensors.len()
    );
    let mut resumed = EncoderTraining::from_checkpoint(&loaded)?;
    while resumed.step_count() < 6 {
        let loss = resumed.step(&sampler, &features)?;
        println!("resumed step {}  loss {loss:.6}", resumed.step_count());
    }
    println!("bit-identical to the uninterrupted run: {}", straight.checkpoint().bit_eq(&resumed.checkpoint()));
    std::fs::remove_file(path)?;
    Ok(())
}
