//! The `scwr` command line. Every command validates its inputs before it
//! writes anything; checkpoints are replaced atomically.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dsp::{load_wav, mel_spectrogram, write_wav, AudioClip, MelSpectrogram};
use crate::encoder::embed_utterance;
use crate::error::{Error, Result};
use crate::trainer::{
    load_checkpoint_kind, load_mel_record, mel_l1, save_checkpoint, save_mel_record, EmbeddingTable, EncoderTraining,
    Ge2eSampler, Manifest, ModelKind, VocoderTraining,
};
use crate::vocoder::{synthesize, Utterance};

#[derive(Debug, Parser)]
#[command(name = "scwr", version, about = "Speaker-conditional WaveRNN vocoder with a GE2E speaker encoder")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// `key=value` run configuration (defaults: the desk preset)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output file
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Log-mel features of a WAV file (vocoder profile) as a tensor record
    Mel { wav: PathBuf },
    /// GE2E training of the speaker encoder
    TrainEncoder {
        manifest: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Embeddings CSV for every manifest utterance
    Embed { checkpoint: PathBuf, manifest: PathBuf },
    /// Teacher-forced vocoder training with fixed per-utterance embeddings
    TrainVocoder {
        manifest: PathBuf,
        embeddings: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Waveform from a mel record and one embeddings-CSV row
    Synthesize {
        checkpoint: PathBuf,
        mels: PathBuf,
        embeddings: PathBuf,
        utterance_id: String,
    },
    /// Mel-L1 distance between two WAV files
    Eval { a: PathBuf, b: PathBuf },
}

#[derive(Clone, Debug, Default, Args)]
pub struct TrainArgs {
    /// Total step count to reach (default: from the config)
    #[arg(long)]
    pub steps: Option<u64>,
    /// Continue from a checkpoint; its config snapshot is reused
    #[arg(long, value_name = "CKPT")]
    pub resume: Option<PathBuf>,
    /// Loss log (default: the output path with a `.loss.csv` extension)
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
}

impl Error {
    /// 1 usage, 2 data or format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| run(&cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("scwr: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("SCWR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("SCWR_THREADS must be a positive integer, got `{v}`")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Mel { wav } => cmd_mel(c, wav),
        Command::TrainEncoder { manifest, train } => cmd_train_encoder(c, manifest, train),
        Command::Embed { checkpoint, manifest } => cmd_embed(c, checkpoint, manifest),
        Command::TrainVocoder {
            manifest,
            embeddings,
            train,
        } => cmd_train_vocoder(c, manifest, embeddings, train),
        Command::Synthesize {
            checkpoint,
            mels,
            embeddings,
            utterance_id,
        } => cmd_synthesize(c, checkpoint, mels, embeddings, utterance_id),
        Command::Eval { a, b } => cmd_eval(a, b),
    }
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::desk(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_path(c: &Common) -> Result<&Path> {
    let out = c.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))?;
    check_parent(out)?;
    Ok(out)
}

fn check_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::Config(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn load_at_rate(path: &Path, rate: u32) -> Result<AudioClip> {
    let clip = load_wav(path)?;
    if clip.sample_rate() != rate {
        return Err(Error::Data(format!(
            "{}: sample rate {} Hz, the model expects {rate} Hz",
            path.display(),
            clip.sample_rate()
        )));
    }
    Ok(clip)
}

fn load_manifest_audio(manifest: &Manifest, rate: u32) -> Result<Vec<AudioClip>> {
    manifest.rows.par_iter().map(|r| load_at_rate(&r.path, rate)).collect()
}

/// Loss log writer: a fresh file with a header, or appended rows when a
/// resumed run continues an existing log.
struct LossLog(File);

impl LossLog {
    fn open(path: &Path, append: bool) -> Result<Self> {
        check_parent(path)?;
        if append && path.exists() {
            return Ok(Self(OpenOptions::new().append(true).open(path)?));
        }
        let mut f = File::create(path)?;
        writeln!(f, "step,loss")?;
        Ok(Self(f))
    }

    fn row(&mut self, step: u64, loss: f64) -> Result<()> {
        writeln!(self.0, "{step},{loss}")?;
        Ok(())
    }
}

fn log_path(out: &Path, train: &TrainArgs) -> PathBuf {
    train.log.clone().unwrap_or_else(|| out.with_extension("loss.csv"))
}

fn reject_with_resume(c: &Common, train: &TrainArgs) -> Result<()> {
    if train.resume.is_some() && (c.config.is_some() || c.seed.is_some()) {
        return Err(Error::Config(
            "--resume reuses the checkpoint's config; drop --config and --seed".into(),
        ));
    }
    Ok(())
}

fn cmd_mel(c: &Common, wav: &Path) -> Result<()> {
    let cfg = run_config(c)?;
    let out = out_path(c)?;
    let mel_cfg = &cfg.vocoder.model.mel;
    let clip = load_at_rate(wav, mel_cfg.sample_rate)?;
    let mel = mel_spectrogram(&clip, mel_cfg)?;
    save_mel_record(&mel, out)?;
    println!("{} frames × {} mels -> {}", mel.frames(), mel.n_mels(), out.display());
    Ok(())
}

fn cmd_train_encoder(c: &Common, manifest: &Path, train: &TrainArgs) -> Result<()> {
    reject_with_resume(c, train)?;
    let mut run = match &train.resume {
        Some(p) => EncoderTraining::from_checkpoint(&load_checkpoint_kind(p, ModelKind::Encoder)?)?,
        None => EncoderTraining::new(&run_config(c)?)?,
    };
    let steps = train.steps.unwrap_or(run.config.encoder.steps);
    let out = out_path(c)?;
    let manifest = Manifest::load(manifest)?;
    manifest.validate_for_ge2e()?;
    let e = run.config.encoder.clone();
    let sampler = Ge2eSampler::new(&manifest, e.speakers, e.utterances)?;
    let clips = load_manifest_audio(&manifest, e.window.mel.sample_rate)?;
    let features: Vec<MelSpectrogram> = clips.par_iter().map(|clip| e.window.features(clip)).collect::<Result<_>>()?;

    let mut log = LossLog::open(&log_path(out, train), train.resume.is_some())?;
    while run.step_count() < steps {
        let loss = run.step(&sampler, &features)?;
        let step = run.step_count();
        log.row(step, loss)?;
        if e.checkpoint_every > 0 && step % e.checkpoint_every == 0 {
            save_checkpoint(&run.checkpoint(), out)?;
        }
    }
    save_checkpoint(&run.checkpoint(), out)?;
    println!("encoder at step {} -> {}", run.step_count(), out.display());
    Ok(())
}

fn cmd_embed(c: &Common, checkpoint: &Path, manifest: &Path) -> Result<()> {
    let out = out_path(c)?;
    let run = EncoderTraining::from_checkpoint(&load_checkpoint_kind(checkpoint, ModelKind::Encoder)?)?;
    let window = &run.config.encoder.window;
    let manifest = Manifest::load(manifest)?;
    let clips = load_manifest_audio(&manifest, window.mel.sample_rate)?;
    let embeddings: Vec<_> = clips
        .par_iter()
        .map(|clip| embed_utterance(clip, &run.params, window))
        .collect::<Result<_>>()?;
    let mut table = EmbeddingTable::new();
    for (row, e) in manifest.rows.iter().zip(embeddings) {
        table.insert(&row.utterance_id, &row.speaker_id, e)?;
    }
    table.save(out)?;
    println!("{} embeddings of width {} -> {}", table.len(), table.dim(), out.display());
    Ok(())
}

fn cmd_train_vocoder(c: &Common, manifest: &Path, embeddings: &Path, train: &TrainArgs) -> Result<()> {
    reject_with_resume(c, train)?;
    let mut run = match &train.resume {
        Some(p) => VocoderTraining::from_checkpoint(&load_checkpoint_kind(p, ModelKind::Vocoder)?)?,
        None => VocoderTraining::new(&run_config(c)?)?,
    };
    let steps = train.steps.unwrap_or(run.config.vocoder.steps);
    let out = out_path(c)?;
    let manifest = Manifest::load(manifest)?;
    let table = EmbeddingTable::load(embeddings)?;
    let v = run.config.vocoder.clone();
    // every row must have an embedding before any audio is read
    for row in &manifest.rows {
        let e = table.get(&row.utterance_id)?;
        if e.dim() != v.model.embedding_dim {
            return Err(Error::Data(format!(
                "embedding for `{}` has {} dims, the vocoder expects {}",
                row.utterance_id,
                e.dim(),
                v.model.embedding_dim
            )));
        }
    }
    if manifest.rows.is_empty() {
        return Err(Error::Data("manifest has no utterances".into()));
    }
    let clips = load_manifest_audio(&manifest, v.model.mel.sample_rate)?;
    let utterances: Vec<Utterance> = manifest
        .rows
        .par_iter()
        .zip(clips)
        .map(|(row, clip)| {
            let u = Utterance::new(clip, table.get(&row.utterance_id)?.clone(), &v.model)?;
            if u.frames() < v.segment_frames {
                return Err(Error::Data(format!(
                    "`{}` has {} frames, segments need {}",
                    row.utterance_id,
                    u.frames(),
                    v.segment_frames
                )));
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;

    let mut log = LossLog::open(&log_path(out, train), train.resume.is_some())?;
    while run.step_count() < steps {
        let loss = run.step(&utterances)?;
        let step = run.step_count();
        log.row(step, loss)?;
        if v.checkpoint_every > 0 && step % v.checkpoint_every == 0 {
            save_checkpoint(&run.checkpoint(), out)?;
        }
    }
    save_checkpoint(&run.checkpoint(), out)?;
    println!("vocoder at step {} -> {}", run.step_count(), out.display());
    Ok(())
}

fn cmd_synthesize(c: &Common, checkpoint: &Path, mels: &Path, embeddings: &Path, utterance_id: &str) -> Result<()> {
    let out = out_path(c)?;
    let run = VocoderTraining::from_checkpoint(&load_checkpoint_kind(checkpoint, ModelKind::Vocoder)?)?;
    let mel = load_mel_record(mels)?;
    let table = EmbeddingTable::load(embeddings)?;
    let embedding = table.get(utterance_id)?;
    let seed = c.seed.unwrap_or(run.config.seed);
    let synth = synthesize(&mel, embedding, &run.params, seed)?;
    write_wav(&synth.clip, out)?;
    println!(
        "{} samples in {:.3} s ({:.0} samples/sec) -> {}",
        synth.clip.len(),
        synth.seconds,
        synth.samples_per_second(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(a: &Path, b: &Path) -> Result<()> {
    let a = load_wav(a)?;
    let b = load_wav(b)?;
    println!("{:.6}", mel_l1(&a, &b)?);
    Ok(())
}
