//! Trains the desk-size speaker encoder on four synthetic filtered-noise
//! speakers and scores held-out clips.
//!
//!     cargo run --release --example encoder_training -- [steps] [seed]

use std::time::Instant;

use scwr::config::RunConfig;
use scwr::corpus::{corpus_manifest, noise_corpus};
use scwr::encoder::{eer, embed_utterance, SpeakerEmbedding};
use scwr::trainer::{EncoderTraining, Ge2eSampler};

fn main() -> scwr::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let mut cfg = RunConfig::desk();
    cfg.seed = seed;
    let train = noise_corpus(4, 10, 3.0, seed);
    let held_out = noise_corpus(4, 5, 3.0, seed + 1000);

    let manifest = corpus_manifest(&train)?;
    let sampler = Ge2eSampler::new(&manifest, cfg.encoder.speakers, cfg.encoder.utterances)?;
    let features = train
        .iter()
        .map(|item| cfg.encoder.window.features(&item.clip))
        .collect::<scwr::Result<Vec<_>>>()?;

    let mut run = EncoderTraining::new(&cfg)?;
    let t0 = Instant::now();
    let mut losses = Vec::new();
    for step in 1..=steps {
        let loss = run.step(&sampler, &features)?;
        losses.push(loss);
        if step % 20 == 0 || step == 1 {
            println!("step {step:4}  loss {loss:.4}");
        }
    }
    let tail = &losses[losses.len().saturating_sub(10)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len() as f64;
    println!(
        "initial {:.4}  final(mean of last {}) {:.4}  ratio {:.3}  {:.1}s",
        losses[0],
        tail.len(),
        final_loss,
        final_loss / losses[0],
        t0.elapsed().as_secs_f64()
    );

    let embeddings: Vec<(String, SpeakerEmbedding)> = held_out
        .iter()
        .map(|item| Ok((item.speaker_id.clone(), embed_utterance(&item.clip, &run.params, &cfg.encoder.window)?)))
        .collect::<scwr::Result<_>>()?;
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let c = embeddings[i].1.cosine(&embeddings[j].1);
            if embeddings[i].0 == embeddings[j].0 {
                genuine.push(c);
            } else {
                impostor.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "held-out: intra {:.3}  inter {:.3}  gap {:.3}  EER {:.3}",
        mean(&genuine),
        mean(&impostor),
        mean(&genuine) - mean(&impostor),
        eer(&genuine, &impostor)?
    );
    Ok(())
}
