use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scwr::config::RunConfig;
use scwr::corpus::{noise_corpus, speaker_code, write_corpus};
use scwr::dsp::{load_wav, mel_spectrogram, AudioClip, MelSpectrogram};
use scwr::trainer::{
    load_checkpoint, load_mel_record, mel_l1, save_checkpoint, save_mel_record, EmbeddingTable, VocoderTraining,
};

fn scwr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scwr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn corpus(dir: &Path) -> PathBuf {
    write_corpus(&noise_corpus(4, 2, 1.8, 1), dir.join("corpus")).unwrap();
    dir.join("corpus/manifest.csv")
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = scwr(dir.path(), &["train-encoder", "missing.csv", "--out", "enc.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!dir.path().join("enc.ckpt").exists());
    assert!(!dir.path().join("enc.loss.csv").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = corpus(dir.path());
    let m = m.to_str().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "encoder.colour=blue\n").unwrap();
    let out = scwr(dir.path(), &["train-encoder", m, "--config", "bad.cfg", "--out", "e.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("encoder.colour"));
    assert_eq!(scwr(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(scwr(dir.path(), &["train-encoder", m]).status.code(), Some(1));
    let threads = Command::new(env!("CARGO_BIN_EXE_scwr"))
        .current_dir(dir.path())
        .env("SCWR_THREADS", "0")
        .args(["eval", "a.wav", "b.wav"])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
    assert!(!dir.path().join("e.ckpt").exists());
}

#[test]
fn encoder_training_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = corpus(d);
    let m = m.to_str().unwrap();
    ok(&scwr(d, &["train-encoder", m, "--seed", "4", "--steps", "4", "--out", "a.ckpt"]));
    ok(&scwr(d, &["train-encoder", m, "--seed", "4", "--steps", "4", "--out", "b.ckpt"]));
    let log_a = std::fs::read_to_string(d.join("a.loss.csv")).unwrap();
    assert_eq!(log_a, std::fs::read_to_string(d.join("b.loss.csv")).unwrap());
    assert_eq!(log_a.lines().count(), 5);
    assert_eq!(log_a.lines().next(), Some("step,loss"));

    // two steps, then resume to four
    ok(&scwr(d, &["train-encoder", m, "--seed", "4", "--steps", "2", "--out", "c.ckpt"]));
    ok(&scwr(d, &["train-encoder", m, "--resume", "c.ckpt", "--steps", "4", "--out", "c.ckpt"]));
    assert_eq!(log_a, std::fs::read_to_string(d.join("c.loss.csv")).unwrap());
    let a = load_checkpoint(d.join("a.ckpt")).unwrap();
    assert!(a.bit_eq(&load_checkpoint(d.join("c.ckpt")).unwrap()));
    assert_eq!(a.step, 4);

    let out = scwr(d, &["train-encoder", m, "--resume", "c.ckpt", "--seed", "1", "--out", "x.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn embed_writes_one_unit_row_per_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = corpus(d);
    let m = m.to_str().unwrap();
    ok(&scwr(d, &["train-encoder", m, "--steps", "1", "--out", "enc.ckpt"]));
    let stdout = ok(&scwr(d, &["embed", "enc.ckpt", m, "--out", "emb.csv"]));
    assert!(stdout.contains("8 embeddings"));
    let table = EmbeddingTable::load(d.join("emb.csv")).unwrap();
    assert_eq!(table.len(), 8);
    assert_eq!(table.dim(), RunConfig::desk().encoder.model.embedding_dim);
    let text = std::fs::read_to_string(d.join("emb.csv")).unwrap();
    for line in text.lines().skip(1) {
        let norm: f64 = line.split(',').skip(2).map(|v| v.parse::<f64>().unwrap().powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6);
    }

    // a vocoder checkpoint is not an encoder
    let voc = VocoderTraining::new(&RunConfig::desk()).unwrap();
    save_checkpoint(&voc.checkpoint(), d.join("voc.ckpt")).unwrap();
    let out = scwr(d, &["embed", "voc.ckpt", m, "--out", "wrong.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind mismatch"));
    assert!(!d.join("wrong.csv").exists());
}

fn code_table(manifest: &Path, dim: usize, skip: Option<&str>) -> EmbeddingTable {
    let m = scwr::trainer::Manifest::load(manifest).unwrap();
    let mut t = EmbeddingTable::new();
    for (i, r) in m.rows.iter().enumerate() {
        if Some(r.utterance_id.as_str()) != skip {
            t.insert(&r.utterance_id, &r.speaker_id, speaker_code(i as u64, dim)).unwrap();
        }
    }
    t
}

#[test]
fn vocoder_zero_steps_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = corpus(d);
    let dim = RunConfig::desk().vocoder.model.embedding_dim;
    code_table(&m, dim, None).save(d.join("emb.csv")).unwrap();
    let m = m.to_str().unwrap();
    ok(&scwr(d, &["train-vocoder", m, "emb.csv", "--seed", "9", "--steps", "0", "--out", "v.ckpt"]));
    let mut cfg = RunConfig::desk();
    cfg.seed = 9;
    let expected = VocoderTraining::new(&cfg).unwrap().checkpoint();
    assert!(load_checkpoint(d.join("v.ckpt")).unwrap().bit_eq(&expected));

    ok(&scwr(d, &["train-vocoder", m, "emb.csv", "--steps", "2", "--out", "w.ckpt"]));
    let log = std::fs::read_to_string(d.join("w.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn missing_embedding_row_is_named_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = corpus(d);
    let dim = RunConfig::desk().vocoder.model.embedding_dim;
    code_table(&m, dim, Some("spk2_1_001")).save(d.join("emb.csv")).unwrap();
    let out = scwr(d, &["train-vocoder", m.to_str().unwrap(), "emb.csv", "--out", "v.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spk2_1_001"));
    assert!(!d.join("v.ckpt").exists());
    assert!(!d.join("v.loss.csv").exists());
}

#[test]
fn synthesize_full_config_writes_frames_times_hop_samples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = RunConfig::full();
    let model = &cfg.vocoder.model;
    assert_eq!(model.hop(), 200);
    save_checkpoint(&VocoderTraining::new(&cfg).unwrap().checkpoint(), d.join("full.ckpt")).unwrap();
    let mel = MelSpectrogram::new(
        (0..10 * model.n_mels()).map(|i| -4.0 - (i % 7) as f32).collect(),
        10,
        model.mel.clone(),
    )
    .unwrap();
    save_mel_record(&mel, d.join("m.rec")).unwrap();
    let mut table = EmbeddingTable::new();
    table.insert("utt", "spk", speaker_code(3, model.embedding_dim)).unwrap();
    table.save(d.join("emb.csv")).unwrap();

    let args = ["synthesize", "full.ckpt", "m.rec", "emb.csv", "utt", "--seed", "11"];
    let stdout = ok(&scwr(d, &[&args[..], &["--out", "a.wav"]].concat()));
    assert!(stdout.contains("samples/sec"), "{stdout}");
    ok(&scwr(d, &[&args[..], &["--out", "b.wav"]].concat()));
    let a = load_wav(d.join("a.wav")).unwrap();
    assert_eq!(a.len(), 2000);
    assert_eq!(std::fs::read(d.join("a.wav")).unwrap(), std::fs::read(d.join("b.wav")).unwrap());

    let out = scwr(d, &["synthesize", "full.ckpt", "m.rec", "emb.csv", "nobody", "--out", "c.wav"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("c.wav").exists());
}

#[test]
fn mel_and_eval_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let a = "corpus/spk0_1_000.wav";
    let b = "corpus/spk3_1_001.wav";

    ok(&scwr(d, &["mel", a, "--out", "a.rec"]));
    let rec = load_mel_record(d.join("a.rec")).unwrap();
    let direct = mel_spectrogram(&load_wav(d.join(a)).unwrap(), &RunConfig::desk().vocoder.model.mel).unwrap();
    assert_eq!(rec, direct);

    let ab = ok(&scwr(d, &["eval", a, b]));
    let ba = ok(&scwr(d, &["eval", b, a]));
    assert_eq!(ab, ba);
    let oracle = mel_l1(&load_wav(d.join(a)).unwrap(), &load_wav(d.join(b)).unwrap()).unwrap();
    assert_eq!(ab.trim(), format!("{oracle:.6}"));
    assert_eq!(ok(&scwr(d, &["eval", a, a])).trim(), "0.000000");

    let other_rate = AudioClip::new(vec![0.1; 4000], 8000).unwrap();
    scwr::dsp::write_wav(&other_rate, d.join("slow.wav")).unwrap();
    assert_eq!(scwr(d, &["eval", a, "slow.wav"]).status.code(), Some(2));
}
