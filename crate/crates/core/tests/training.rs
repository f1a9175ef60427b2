use scwr::config::RunConfig;
use scwr::corpus::{corpus_manifest, harmonic_corpus, noise_corpus, speaker_code};
use scwr::numerics::Tensor;
use scwr::trainer::{
    load_checkpoint, Checkpoint, EncoderTraining, Ge2eSampler, ModelKind, VocoderTraining,
};
use scwr::vocoder::Utterance;
use scwr::Error;

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden.ckpt");

#[test]
fn golden_checkpoint_loads_bit_exact() {
    let ck = load_checkpoint(GOLDEN).unwrap();
    assert_eq!(ck.kind, ModelKind::Encoder);
    assert_eq!(ck.step, 42);
    assert_eq!(ck.config_value("encoder.hidden").unwrap(), "8");
    assert_eq!(ck.config_value("note").unwrap(), "golden fixture");
    let expect: [(&str, &[usize], &[u32]); 4] = [
        (
            "lstm.0.w_ih",
            &[2, 3],
            &[0x3f00_0000, 0xbfa0_0000, 0x4040_0000, 0x3a83_126f, 0x8000_0000, 0x477f_e000],
        ),
        ("proj.b", &[4], &[0x3f80_0000, 0x4000_0000, 0xc060_0000, 0x0000_0001]),
        ("ge2e.w", &[1], &[0x4120_0000]),
        ("scalar", &[], &[0xc0e0_0000]),
    ];
    assert_eq!(ck.tensors.len(), expect.len());
    for ((name, t), (ename, shape, bits)) in ck.tensors.iter().zip(expect) {
        assert_eq!(name, ename);
        assert_eq!(t.shape(), shape);
        let got: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(got, bits, "{name}");
    }
    // writing it back reproduces the file byte for byte
    assert_eq!(ck.to_bytes().unwrap(), std::fs::read(GOLDEN).unwrap());
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.seed = 12;
    cfg.encoder.crop_frames = 40;
    cfg.encoder.window.window_frames = 40;
    cfg.encoder.window.hop_frames = 20;
    cfg.vocoder.batch = 3;
    cfg.vocoder.segment_frames = 4;
    cfg
}

#[test]
fn encoder_training_resumes_exactly() {
    let cfg = small_config();
    let items = noise_corpus(4, 3, 0.8, 2);
    let manifest = corpus_manifest(&items).unwrap();
    let sampler = Ge2eSampler::new(&manifest, 4, 2).unwrap();
    let feats: Vec<_> = items.iter().map(|i| cfg.encoder.window.features(&i.clip).unwrap()).collect();

    let mut straight = EncoderTraining::new(&cfg).unwrap();
    let a: Vec<f64> = (0..4).map(|_| straight.step(&sampler, &feats).unwrap()).collect();

    let mut first = EncoderTraining::new(&cfg).unwrap();
    let mut b: Vec<f64> = (0..2).map(|_| first.step(&sampler, &feats).unwrap()).collect();
    let bytes = first.checkpoint().to_bytes().unwrap();
    let mut resumed = EncoderTraining::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(resumed.step_count(), 2);
    b.extend((0..2).map(|_| resumed.step(&sampler, &feats).unwrap()));

    assert_eq!(a, b);
    assert!(straight.checkpoint().bit_eq(&resumed.checkpoint()));
}

#[test]
fn vocoder_training_resumes_exactly() {
    let cfg = small_config();
    let model = &cfg.vocoder.model;
    let utts: Vec<Utterance> = harmonic_corpus(2, 1, 0.2, 3)
        .into_iter()
        .enumerate()
        .map(|(i, item)| Utterance::new(item.clip, speaker_code(i as u64, model.embedding_dim), model).unwrap())
        .collect();

    let mut straight = VocoderTraining::new(&cfg).unwrap();
    let a: Vec<f64> = (0..4).map(|_| straight.step(&utts).unwrap()).collect();

    let mut first = VocoderTraining::new(&cfg).unwrap();
    let mut b: Vec<f64> = (0..2).map(|_| first.step(&utts).unwrap()).collect();
    let ck = Checkpoint::from_bytes(&first.checkpoint().to_bytes().unwrap()).unwrap();
    let mut resumed = VocoderTraining::from_checkpoint(&ck).unwrap();
    b.extend((0..2).map(|_| resumed.step(&utts).unwrap()));

    assert_eq!(a, b);
    assert!(straight.checkpoint().bit_eq(&resumed.checkpoint()));
    assert_ne!(a[0], a[3]);
}

#[test]
fn checkpoint_must_match_its_config() {
    let run = VocoderTraining::new(&RunConfig::desk()).unwrap();
    let mut ck = run.checkpoint();
    ck.config.insert("vocoder.rnn_width".into(), "16".into());
    assert!(matches!(VocoderTraining::from_checkpoint(&ck), Err(Error::Shape(_))));

    let mut ck = run.checkpoint();
    ck.tensors.insert("extra", Tensor::scalar(1.0f32));
    assert!(matches!(VocoderTraining::from_checkpoint(&ck), Err(Error::Shape(_))));

    let ck = run.checkpoint();
    assert!(matches!(EncoderTraining::from_checkpoint(&ck), Err(Error::KindMismatch { .. })));

    let mut ck = EncoderTraining::new(&RunConfig::desk()).unwrap().checkpoint();
    ck.config.insert("encoder.shade".into(), "teal".into());
    assert!(matches!(EncoderTraining::from_checkpoint(&ck), Err(Error::Config(_))));
}

#[test]
fn model_only_checkpoints_load_with_fresh_moments() {
    let run = EncoderTraining::new(&RunConfig::desk()).unwrap();
    let mut ck = run.checkpoint();
    let names: Vec<String> = ck.tensors.names().filter(|n| !n.starts_with("adam.")).map(String::from).collect();
    let mut trimmed = scwr::numerics::ParamStore::new();
    for n in &names {
        trimmed.insert(n.as_str(), ck.tensors.get(n).unwrap().clone());
    }
    ck.tensors = trimmed;
    let back = EncoderTraining::from_checkpoint(&ck).unwrap();
    assert!(back.params.store.bit_eq(&run.params.store));
    assert!(back.opt.m.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
}
