//! Audio clips, WAV I/O, energy-based voice activity trimming and log
//! mel-spectrogram features.

mod mel;
mod vad;
mod wav;

pub use mel::{hz_to_mel, mel_spectrogram, mel_to_hz, MelConfig, MelFilterbank, MelSpectrogram};
pub use vad::{vad_trim, DEFAULT_VAD_THRESHOLD_DB};
pub use wav::{load_wav, write_wav};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Data(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a clip, clamping every sample into `[-1, 1]`.
    pub fn from_clamped(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples: samples
                .into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
                .collect(),
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sub-clip `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Multiplies every sample by `gain`, clamping into `[-1, 1]`.
    pub fn scaled(&self, gain: f32) -> Self {
        Self::from_clamped(self.samples.iter().map(|v| v * gain).collect(), self.sample_rate)
    }
}
