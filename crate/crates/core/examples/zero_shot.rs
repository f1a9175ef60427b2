//! The full pipeline on synthetic data: train the encoder on four speakers,
//! train the vocoder on their clips with the encoder's embeddings, then
//! vocode a fifth speaker it never saw from that speaker's embedding alone.
//!
//!     cargo run --release --example zero_shot -- [encoder_steps] [vocoder_steps]

use scwr::config::RunConfig;
use scwr::corpus::{corpus_manifest, noise_corpus};
use scwr::dsp::mel_spectrogram;
use scwr::encoder::embed_utterance;
use scwr::trainer::{mel_l1, EncoderTraining, Ge2eSampler, VocoderTraining};
use scwr::vocoder::{synthesize, Utterance};

fn main() -> scwr::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = RunConfig::desk();
    cfg.encoder.steps = 100;
    cfg.vocoder.steps = 800;
    if let Some(v) = args.get(1) {
        cfg.set("encoder.steps", v)?;
    }
    if let Some(v) = args.get(2) {
        cfg.set("vocoder.steps", v)?;
    }

    let all = noise_corpus(5, 4, 2.0, 21);
    let (seen, unseen): (Vec<_>, Vec<_>) = all.into_iter().partition(|i| i.speaker_id != "spk4");

    let window = cfg.encoder.window.clone();
    let sampler = Ge2eSampler::new(&corpus_manifest(&seen)?, cfg.encoder.speakers, cfg.encoder.utterances)?;
    let features = seen.iter().map(|i| window.features(&i.clip)).collect::<scwr::Result<Vec<_>>>()?;
    let mut encoder = EncoderTraining::new(&cfg)?;
    while encoder.step_count() < cfg.encoder.steps {
        let loss = encoder.step(&sampler, &features)?;
        if encoder.step_count() % 25 == 0 {
            println!("encoder step {:4}  loss {loss:.4}", encoder.step_count());
        }
    }

    let model = cfg.vocoder.model.clone();
    let utts = seen
        .iter()
        .map(|i| Utterance::new(i.clip.clone(), embed_utterance(&i.clip, &encoder.params, &window)?, &model))
        .collect::<scwr::Result<Vec<_>>>()?;
    let mut vocoder = VocoderTraining::new(&cfg)?;
    while vocoder.step_count() < cfg.vocoder.steps {
        let loss = vocoder.step(&utts)?;
        if vocoder.step_count() % 200 == 0 {
            println!("vocoder step {:4}  loss {loss:.4}", vocoder.step_count());
        }
    }

    let target = &unseen[0];
    let e = embed_utterance(&target.clip, &encoder.params, &window)?;
    let nearest = seen
        .iter()
        .zip(&utts)
        .map(|(i, u)| (i.speaker_id.as_str(), e.cosine(&u.embedding)))
        .fold(("", f64::MIN), |best, c| if c.1 > best.1 { c } else { best });
    println!("unseen {}: closest seen clip is {} (cosine {:.3})", target.speaker_id, nearest.0, nearest.1);

    let mel = mel_spectrogram(&target.clip, &model.mel)?;
    let own = synthesize(&mel, &e, &vocoder.params, 0)?;
    let other = synthesize(&mel, &utts[0].embedding, &vocoder.params, 0)?;
    println!(
        "copy-synthesis mel-L1: own embedding {:.4}  {} embedding {:.4}",
        mel_l1(&own.clip, &target.clip)?,
        seen[0].speaker_id,
        mel_l1(&other.clip, &target.clip)?
    );
    Ok(())
}
