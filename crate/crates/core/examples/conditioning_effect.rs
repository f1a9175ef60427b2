//! Trains one desk vocoder on two speakers that differ only in a narrow
//! resonance, each with its own fixed embedding, then copy-synthesizes the
//! training clips with the matching and with the swapped embedding.
//!
//!     cargo run --release --example conditioning_effect -- [steps] [seed]

use std::time::Instant;

use scwr::config::RunConfig;
use scwr::corpus::{speaker_code, twin_resonance_corpus};
use scwr::dsp::mel_spectrogram;
use scwr::trainer::{mel_l1, VocoderTraining};
use scwr::vocoder::{synthesize, vocoder_loss, Utterance};

fn main() -> scwr::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = RunConfig::desk();
    cfg.seed = 1;
    cfg.vocoder.batch = 16;
    cfg.vocoder.steps = 4000;
    if let Some(v) = args.get(1) {
        cfg.set("vocoder.steps", v)?;
    }
    if let Some(v) = args.get(2) {
        cfg.set("seed", v)?;
    }
    let model = cfg.vocoder.model.clone();
    let items = twin_resonance_corpus(1.0, 40);
    let codes: Vec<_> = (0..2).map(|s| speaker_code(s, model.embedding_dim)).collect();
    let utts = items
        .iter()
        .zip(&codes)
        .map(|(item, code)| Utterance::new(item.clip.clone(), code.clone(), &model))
        .collect::<scwr::Result<Vec<_>>>()?;

    let mut run = VocoderTraining::new(&cfg)?;
    let t0 = Instant::now();
    for step in 1..=cfg.vocoder.steps {
        let loss = run.step(&utts)?;
        if step % 250 == 0 || step == 1 {
            println!("step {step:5}  loss {loss:.4}");
        }
    }
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());

    for (s, u) in utts.iter().enumerate() {
        let audio = u.aligned_audio();
        println!(
            "teacher-forced NLL {}: matched {:.4}  swapped {:.4}",
            items[s].speaker_id,
            vocoder_loss(&audio, &u.mel, &codes[s], &run.params)?,
            vocoder_loss(&audio, &u.mel, &codes[1 - s], &run.params)?
        );
    }

    // the same sampling seed for both arms of each comparison
    let mut wins = 0;
    for seed in 0..10 {
        let (mut matched, mut swapped) = (0.0, 0.0);
        for (s, item) in items.iter().enumerate() {
            let mel = mel_spectrogram(&item.clip, &model.mel)?;
            matched += mel_l1(&synthesize(&mel, &codes[s], &run.params, seed)?.clip, &item.clip)?;
            swapped += mel_l1(&synthesize(&mel, &codes[1 - s], &run.params, seed)?.clip, &item.clip)?;
        }
        wins += usize::from(matched < swapped);
        println!("seed {seed}: matched {:.4}  swapped {:.4}", matched / 2.0, swapped / 2.0);
    }
    println!("matched embedding better in {wins}/10 seeds");
    Ok(())
}
