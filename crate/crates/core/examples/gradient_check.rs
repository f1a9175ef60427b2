//! Checks reverse-mode gradients of the GE2E loss through a small encoder,
//! and of the vocoder loss on a hop-4 model, against central differences.
//!
//!     cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scwr::corpus::speaker_code;
use scwr::dsp::AudioClip;
use scwr::encoder::{encode_batch_graph, ge2e_loss_graph, similarity_graph, EncoderConfig, EncoderParams};
use scwr::trainer::{gradient_check, GradCheckConfig};
use scwr::vocoder::{vocoder_loss_graph, SegmentBatch, Utterance, VocoderConfig, VocoderParams};

fn main() -> scwr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let check = GradCheckConfig::default();

    let ecfg = EncoderConfig {
        n_mels: 6,
        layers: 2,
        hidden: 8,
        embedding_dim: 5,
    };
    let params = EncoderParams::<f64>::init(&ecfg, &mut rng)?;
    // 4 speakers × 2 utterances, 7-frame windows
    let windows: Vec<Vec<f32>> = (0..8).map(|_| (0..7 * 6).map(|_| rng.gen_range(-3.0..1.0)).collect()).collect();
    let report = gradient_check(
        |g, p| {
            let refs: Vec<&[f32]> = windows.iter().map(Vec::as_slice).collect();
            let e = encode_batch_graph(g, p, &ecfg, &refs, 7)?;
            let sm = similarity_graph(g, e, p.var("ge2e.w")?, p.var("ge2e.b")?, 4, 2)?;
            ge2e_loss_graph(g, sm, 4, 2)
        },
        &params.store,
        &check,
        &mut rng,
    )?;
    println!("encoder + GE2E: {report:?}");

    let vcfg = VocoderConfig::tiny();
    let params = VocoderParams::<f64>::init(&vcfg, &mut rng)?;
    let n = vcfg.mel.n_fft + 15 * vcfg.hop();
    let clip = AudioClip::new((0..n).map(|_| rng.gen_range(-0.6..0.6)).collect(), vcfg.mel.sample_rate)?;
    let utt = Utterance::new(clip, speaker_code(0, vcfg.embedding_dim), &vcfg)?;
    let batch = SegmentBatch {
        frames: 8,
        segments: vec![utt.segment(0, 8)?, utt.segment(3, 8)?],
    };
    let report = gradient_check(|g, p| vocoder_loss_graph(g, p, &vcfg, &batch), &params.store, &check, &mut rng)?;
    println!("vocoder (hop {}): {report:?}", vcfg.hop());
    Ok(())
}
