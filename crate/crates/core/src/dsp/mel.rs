use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// STFT and mel filterbank settings.
#[derive(Clone, Debug, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl MelConfig {
    /// Speaker-encoder features: 25 ms windows, 10 ms hop, 40 channels.
    pub fn encoder() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 512,
            win_length: 400,
            hop_length: 160,
            n_mels: 40,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: 1e-5,
        }
    }

    /// Vocoder conditioning features at 16 kHz; the hop factors as 5·5·8.
    pub fn vocoder() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 1024,
            win_length: 800,
            hop_length: 200,
            n_mels: 80,
            fmin: 40.0,
            fmax: 8_000.0,
            log_floor: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 || self.n_mels == 0 || self.hop_length == 0 {
            return bad("sample_rate, n_mels and hop_length must be positive".into());
        }
        if !(self.hop_length <= self.win_length && self.win_length <= self.n_fft) {
            return bad(format!(
                "need hop <= win <= n_fft, got {} / {} / {}",
                self.hop_length, self.win_length, self.n_fft
            ));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0)
        {
            return bad(format!(
                "need 0 <= fmin < fmax <= sample_rate/2, got {} / {}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Number of frames for a clip of `n` samples (shorter clips are padded
    /// to one window).
    pub fn frames_for(&self, n: usize) -> usize {
        if n <= self.n_fft {
            1
        } else {
            1 + (n - self.n_fft) / self.hop_length
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with unit peaks on the HTK mel scale.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    n_bins: usize,
    weights: Vec<f64>,
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let points: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for m in 0..cfg.n_mels {
            let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                weights[m * n_bins + k] = w;
            }
        }
        Ok(Self {
            n_bins,
            weights,
            centers: points[1..=cfg.n_mels].to_vec(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_mels(&self) -> usize {
        self.centers.len()
    }

    /// Weights of mel channel `m` over the FFT bins.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Centre frequency of each channel in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
}

/// Log mel energies, `frames × n_mels`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f32>,
    frames: usize,
    config: MelConfig,
}

impl MelSpectrogram {
    pub fn new(values: Vec<f32>, frames: usize, config: MelConfig) -> Result<Self> {
        if frames == 0 || values.len() != frames * config.n_mels {
            return Err(Error::Shape(format!(
                "{} values for {frames} frames of {} mels",
                values.len(),
                config.n_mels
            )));
        }
        Ok(Self {
            values,
            frames,
            config,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.config.n_mels
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, f: usize) -> &[f32] {
        let n = self.config.n_mels;
        &self.values[f * n..(f + 1) * n]
    }

    /// Frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::Shape(format!(
                "frames [{start}, {}) of {}",
                start + len,
                self.frames
            )));
        }
        let n = self.config.n_mels;
        Self::new(
            self.values[start * n..(start + len) * n].to_vec(),
            len,
            self.config.clone(),
        )
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn(&[self.frames, self.config.n_mels], |i| T::lit(self.values[i] as f64))
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Log mel-spectrogram without centring: frame `f` covers samples
/// `[f·hop, f·hop + n_fft)`, the Hann window of `win_length` sits in the
/// middle of that span, and clips shorter than `n_fft` are zero-padded.
pub fn mel_spectrogram(clip: &AudioClip, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let bank = MelFilterbank::new(cfg)?;
    if clip.sample_rate() != cfg.sample_rate {
        return Err(Error::Config(format!(
            "clip rate {} Hz does not match mel config rate {} Hz",
            clip.sample_rate(),
            cfg.sample_rate
        )));
    }
    if clip.is_empty() {
        return Err(Error::Data("empty clip".into()));
    }
    let n_fft = cfg.n_fft;
    let mut padded: Vec<f64> = clip.samples().iter().map(|&v| v as f64).collect();
    if padded.len() < n_fft {
        padded.resize(n_fft, 0.0);
    }
    let frames = cfg.frames_for(clip.len());
    let offset = (n_fft - cfg.win_length) / 2;
    let window = hann(cfg.win_length);
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; bank.n_bins()];
    let log_floor = cfg.log_floor;
    let mut values = Vec::with_capacity(frames * cfg.n_mels);
    for f in 0..frames {
        let start = f * cfg.hop_length;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            buf[offset + i] = Complex::new(padded[start + offset + i] * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let e: f64 = bank.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            values.push(e.max(log_floor).ln() as f32);
        }
    }
    MelSpectrogram::new(values, frames, cfg.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_clip_sits_at_the_floor() {
        let cfg = MelConfig::encoder();
        let clip = AudioClip::new(vec![0.0; 5000], 16_000).unwrap();
        let mel = mel_spectrogram(&clip, &cfg).unwrap();
        let floor = (cfg.log_floor.ln()) as f32;
        assert!(mel.values().iter().all(|&v| v == floor));
    }

    #[test]
    fn frame_count_formula() {
        let cfg = MelConfig::vocoder();
        let n = cfg.n_fft + 3 * cfg.hop_length;
        let clip = AudioClip::new(vec![0.1; n], 16_000).unwrap();
        assert_eq!(mel_spectrogram(&clip, &cfg).unwrap().frames(), 4);
        let short = AudioClip::new(vec![0.1; 10], 16_000).unwrap();
        assert_eq!(mel_spectrogram(&short, &cfg).unwrap().frames(), 1);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = MelConfig::encoder();
        cfg.hop_length = cfg.win_length + 1;
        assert!(cfg.validate().is_err());
        let mut cfg = MelConfig::encoder();
        cfg.fmax = 9000.0;
        assert!(cfg.validate().is_err());
        let mut cfg = MelConfig::encoder();
        cfg.win_length = cfg.n_fft * 2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let clip = AudioClip::new(vec![0.1; 2000], 22_050).unwrap();
        assert!(matches!(
            mel_spectrogram(&clip, &MelConfig::encoder()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn filterbank_covers_interior_bins() {
        for cfg in [MelConfig::encoder(), MelConfig::vocoder()] {
            let bank = MelFilterbank::new(&cfg).unwrap();
            let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
            for k in 0..bank.n_bins() {
                let f = k as f64 * bin_hz;
                let total: f64 = (0..cfg.n_mels).map(|m| bank.row(m)[k]).sum();
                assert!((0..cfg.n_mels).all(|m| bank.row(m)[k] >= 0.0));
                if f > cfg.fmin && f < cfg.fmax {
                    assert!(total > 0.0, "bin {k} ({f} Hz) uncovered");
                }
            }
        }
    }
}
