//! `key=value` run configuration shared by the command line and checkpoint
//! snapshots. Every key has a default from a preset; unknown keys are errors.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::dsp::MelConfig;
use crate::encoder::{EncoderConfig, WindowConfig};
use crate::error::{Error, Result};
use crate::vocoder::VocoderConfig;

/// Encoder model, feature windowing and GE2E optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSettings {
    pub model: EncoderConfig,
    pub window: WindowConfig,
    pub lr: f64,
    pub clip_norm: f64,
    pub speakers: usize,
    pub utterances: usize,
    pub crop_frames: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
}

/// Vocoder model and teacher-forcing optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct VocoderSettings {
    pub model: VocoderConfig,
    pub lr: f64,
    pub clip_norm: f64,
    pub batch: usize,
    pub segment_frames: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub encoder: EncoderSettings,
    pub vocoder: VocoderSettings,
}

impl EncoderSettings {
    pub fn desk() -> Self {
        Self {
            model: EncoderConfig::desk(),
            window: WindowConfig::default(),
            lr: 1e-3,
            clip_norm: 3.0,
            speakers: 4,
            utterances: 2,
            crop_frames: 160,
            steps: 200,
            checkpoint_every: 100,
        }
    }

    pub fn full() -> Self {
        Self {
            model: EncoderConfig::full(),
            speakers: 64,
            utterances: 10,
            steps: 100_000,
            checkpoint_every: 1000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.window.validate()?;
        if self.model.n_mels != self.window.mel.n_mels {
            return Err(Error::Config("encoder.mel.n_mels must match the model input".into()));
        }
        positive_rate(self.lr, "encoder.lr")?;
        if self.speakers < 2 || self.utterances < 2 || self.crop_frames == 0 {
            return Err(Error::Config("encoder batches need S ≥ 2, U ≥ 2 and a positive crop".into()));
        }
        Ok(())
    }
}

impl VocoderSettings {
    pub fn desk() -> Self {
        Self {
            // embedding width follows the desk encoder
            model: VocoderConfig {
                embedding_dim: 64,
                ..VocoderConfig::micro()
            },
            lr: 1e-3,
            clip_norm: 3.0,
            batch: 8,
            segment_frames: 8,
            steps: 2000,
            checkpoint_every: 500,
        }
    }

    pub fn full() -> Self {
        Self {
            model: VocoderConfig::full(),
            lr: 1e-4,
            batch: 16,
            segment_frames: 8,
            steps: 500_000,
            checkpoint_every: 5000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        positive_rate(self.lr, "vocoder.lr")?;
        if self.batch == 0 || self.segment_frames == 0 {
            return Err(Error::Config("vocoder.batch and vocoder.segment_frames must be positive".into()));
        }
        Ok(())
    }
}

fn positive_rate(v: f64, key: &str) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{key} must be a finite non-negative number")));
    }
    Ok(())
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn set_mel(mel: &mut MelConfig, field: &str, key: &str, value: &str) -> Result<bool> {
    match field {
        "sample_rate" => mel.sample_rate = parse(key, value)?,
        "n_fft" => mel.n_fft = parse(key, value)?,
        "win_length" => mel.win_length = parse(key, value)?,
        "hop_length" => mel.hop_length = parse(key, value)?,
        "n_mels" => mel.n_mels = parse(key, value)?,
        "fmin" => mel.fmin = parse(key, value)?,
        "fmax" => mel.fmax = parse(key, value)?,
        "log_floor" => mel.log_floor = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn mel_entries(prefix: &str, mel: &MelConfig, out: &mut Vec<(String, String)>) {
    let mut push = |k: &str, v: &dyn Display| out.push((format!("{prefix}.mel.{k}"), v.to_string()));
    push("sample_rate", &mel.sample_rate);
    push("n_fft", &mel.n_fft);
    push("win_length", &mel.win_length);
    push("hop_length", &mel.hop_length);
    push("n_mels", &mel.n_mels);
    push("fmin", &mel.fmin);
    push("fmax", &mel.fmax);
    push("log_floor", &mel.log_floor);
}

impl RunConfig {
    /// Minutes-scale models for a laptop CPU.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            encoder: EncoderSettings::desk(),
            vocoder: VocoderSettings::desk(),
        }
    }

    /// 3×768→256 encoder and 512-wide vocoder.
    pub fn full() -> Self {
        Self {
            seed: 0,
            encoder: EncoderSettings::full(),
            vocoder: VocoderSettings::full(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => Err(Error::Config(format!("unknown preset `{name}` (expected desk or full)"))),
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let unknown = || Err(Error::Config(format!("unknown config key `{key}`")));
        if key == "seed" {
            self.seed = parse(key, value)?;
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("encoder.") {
            let e = &mut self.encoder;
            if let Some(field) = rest.strip_prefix("mel.") {
                if !set_mel(&mut e.window.mel, field, key, value)? {
                    return unknown();
                }
                e.model.n_mels = e.window.mel.n_mels;
                return Ok(());
            }
            match rest {
                "layers" => e.model.layers = parse(key, value)?,
                "hidden" => e.model.hidden = parse(key, value)?,
                "embedding_dim" => e.model.embedding_dim = parse(key, value)?,
                "window_frames" => e.window.window_frames = parse(key, value)?,
                "window_hop" => e.window.hop_frames = parse(key, value)?,
                "vad_db" => {
                    e.window.vad_threshold_db = match value.trim() {
                        "off" => None,
                        v => Some(parse(key, v)?),
                    }
                }
                "lr" => e.lr = parse(key, value)?,
                "clip_norm" => e.clip_norm = parse(key, value)?,
                "speakers" => e.speakers = parse(key, value)?,
                "utterances" => e.utterances = parse(key, value)?,
                "crop_frames" => e.crop_frames = parse(key, value)?,
                "steps" => e.steps = parse(key, value)?,
                "checkpoint_every" => e.checkpoint_every = parse(key, value)?,
                _ => return unknown(),
            }
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("vocoder.") {
            let v = &mut self.vocoder;
            if let Some(field) = rest.strip_prefix("mel.") {
                return if set_mel(&mut v.model.mel, field, key, value)? { Ok(()) } else { unknown() };
            }
            match rest {
                "upsample" => {
                    let f: Vec<usize> = value.split(',').map(|s| parse(key, s)).collect::<Result<_>>()?;
                    v.model.upsample_factors = f
                        .try_into()
                        .map_err(|_| Error::Config(format!("`{key}` needs three factors")))?;
                }
                "conv_kernel" => v.model.conv_kernel = parse(key, value)?,
                "residual_blocks" => v.model.residual_blocks = parse(key, value)?,
                "conditioning_channels" => v.model.conditioning_channels = parse(key, value)?,
                "rnn_width" => v.model.rnn_width = parse(key, value)?,
                "fc_width" => v.model.fc_width = parse(key, value)?,
                "mixtures" => v.model.mixtures = parse(key, value)?,
                "bits" => v.model.bits = parse(key, value)?,
                "embedding_dim" => v.model.embedding_dim = parse(key, value)?,
                "lr" => v.lr = parse(key, value)?,
                "clip_norm" => v.clip_norm = parse(key, value)?,
                "batch" => v.batch = parse(key, value)?,
                "segment_frames" => v.segment_frames = parse(key, value)?,
                "steps" => v.steps = parse(key, value)?,
                "checkpoint_every" => v.checkpoint_every = parse(key, value)?,
                _ => return unknown(),
            }
            return Ok(());
        }
        unknown()
    }

    /// Parses `key=value` lines; `#` starts a comment. A `preset` line
    /// selects the defaults and is applied before everything else.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut preset = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                preset = Some(v.to_string());
            } else {
                pairs.push((k.to_string(), v.to_string()));
            }
        }
        let mut cfg = match preset {
            Some(p) => Self::preset(&p)?,
            None => Self::desk(),
        };
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        self.encoder.validate()?;
        self.vocoder.validate()
    }

    /// `seed` plus every `encoder.*` key.
    pub fn encoder_entries(&self) -> Vec<(String, String)> {
        let e = &self.encoder;
        let mut out = vec![("seed".to_string(), self.seed.to_string())];
        let mut push = |k: &str, v: String| out.push((format!("encoder.{k}"), v));
        push("layers", e.model.layers.to_string());
        push("hidden", e.model.hidden.to_string());
        push("embedding_dim", e.model.embedding_dim.to_string());
        push("window_frames", e.window.window_frames.to_string());
        push("window_hop", e.window.hop_frames.to_string());
        push("vad_db", e.window.vad_threshold_db.map_or("off".to_string(), |v| v.to_string()));
        push("lr", e.lr.to_string());
        push("clip_norm", e.clip_norm.to_string());
        push("speakers", e.speakers.to_string());
        push("utterances", e.utterances.to_string());
        push("crop_frames", e.crop_frames.to_string());
        push("steps", e.steps.to_string());
        push("checkpoint_every", e.checkpoint_every.to_string());
        mel_entries("encoder", &e.window.mel, &mut out);
        out
    }

    /// `seed` plus every `vocoder.*` key.
    pub fn vocoder_entries(&self) -> Vec<(String, String)> {
        let v = &self.vocoder;
        let m = &v.model;
        let f = m.upsample_factors;
        let mut out = vec![("seed".to_string(), self.seed.to_string())];
        let mut push = |k: &str, val: String| out.push((format!("vocoder.{k}"), val));
        push("upsample", format!("{},{},{}", f[0], f[1], f[2]));
        push("conv_kernel", m.conv_kernel.to_string());
        push("residual_blocks", m.residual_blocks.to_string());
        push("conditioning_channels", m.conditioning_channels.to_string());
        push("rnn_width", m.rnn_width.to_string());
        push("fc_width", m.fc_width.to_string());
        push("mixtures", m.mixtures.to_string());
        push("bits", m.bits.to_string());
        push("embedding_dim", m.embedding_dim.to_string());
        push("lr", v.lr.to_string());
        push("clip_norm", v.clip_norm.to_string());
        push("batch", v.batch.to_string());
        push("segment_frames", v.segment_frames.to_string());
        push("steps", v.steps.to_string());
        push("checkpoint_every", v.checkpoint_every.to_string());
        mel_entries("vocoder", &m.mel, &mut out);
        out
    }

    /// Rebuilds a config from a checkpoint snapshot.
    pub fn from_entries(entries: &IndexMap<String, String>) -> Result<Self> {
        let mut cfg = Self::desk();
        cfg.apply(entries.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }
}
