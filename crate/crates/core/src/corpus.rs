//! Synthetic speech-like corpora for demos and end-to-end checks: filtered
//! noise with per-speaker resonances for the encoder, and harmonic voices
//! with per-speaker pitch for the vocoder.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{write_wav, AudioClip};
use crate::encoder::SpeakerEmbedding;
use crate::error::Result;
use crate::trainer::{Manifest, ManifestRow};

/// Resonances (centre Hz, bandwidth Hz, gain) shaping one speaker's noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerProfile {
    pub resonances: Vec<(f64, f64, f64)>,
}

const PROFILES: [[(f64, f64, f64); 3]; 4] = [
    [(300.0, 120.0, 1.0), (1200.0, 200.0, 0.6), (2500.0, 300.0, 0.3)],
    [(700.0, 150.0, 1.0), (1900.0, 250.0, 0.7), (3300.0, 350.0, 0.4)],
    [(450.0, 100.0, 0.5), (950.0, 150.0, 1.0), (4200.0, 400.0, 0.5)],
    [(200.0, 80.0, 0.4), (2800.0, 300.0, 1.0), (5500.0, 500.0, 0.6)],
];

impl SpeakerProfile {
    /// Four hand-picked, clearly distinct profiles, then random ones.
    pub fn nth(i: usize) -> Self {
        if let Some(p) = PROFILES.get(i) {
            return Self { resonances: p.to_vec() };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ i as u64);
        Self {
            resonances: (0..3)
                .map(|_| {
                    let f = rng.gen_range(200.0..6000.0);
                    (f, f * rng.gen_range(0.1..0.3), rng.gen_range(0.3..1.0))
                })
                .collect(),
        }
    }
}

/// Two-pole band-pass filter with unit peak gain (RBJ constant-peak form).
struct Bandpass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x: [f64; 2],
    y: [f64; 2],
}

impl Bandpass {
    fn new(centre: f64, bandwidth: f64, rate: f64) -> Self {
        let w0 = 2.0 * PI * centre / rate;
        let q = centre / bandwidth;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b2 * self.x[1] - self.a1 * self.y[0] - self.a2 * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

/// Syllable-like loudness contour: raised-cosine bursts separated by short
/// near-silent gaps.
fn envelope(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut env = vec![0.02f64; n];
    let mut pos = (rng.gen_range(0.02..0.08) * rate) as usize;
    while pos < n {
        let len = (rng.gen_range(0.12..0.3) * rate) as usize;
        let peak: f64 = rng.gen_range(0.6..1.0);
        for i in 0..len.min(n - pos) {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos();
            env[pos + i] = env[pos + i].max(peak * w);
        }
        pos += len + (rng.gen_range(0.03..0.08) * rate) as usize;
    }
    env
}

fn normalize_peak(mut s: Vec<f64>, peak: f64) -> Vec<f32> {
    let max = s.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in s.iter_mut() {
        *v *= peak / max;
    }
    s.into_iter().map(|v| v as f32).collect()
}

/// Noise shaped by the speaker's resonances (each jittered by a few percent
/// per clip) under a syllable envelope.
pub fn noise_utterance(profile: &SpeakerProfile, seconds: f64, rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * rate as f64) as usize;
    let mut filters: Vec<(Bandpass, f64)> = profile
        .resonances
        .iter()
        .map(|&(f, bw, gain)| {
            let jitter = rng.gen_range(0.96..1.04);
            (Bandpass::new(f * jitter, bw, rate as f64), gain)
        })
        .collect();
    let env = envelope(n, rate as f64, &mut rng);
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = filters.iter_mut().map(|(f, g)| *g * f.tick(x)).sum();
            y * env[i]
        })
        .collect();
    AudioClip::from_clamped(normalize_peak(raw, rng.gen_range(0.3..0.8)), rate)
}

/// Harmonic "voice": a slowly gliding pitch around `f0` with a spectral
/// tilt and syllable envelope.
pub fn harmonic_utterance(f0: f64, tilt: f64, seconds: f64, rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * rate as f64) as usize;
    let env = envelope(n, rate as f64, &mut rng);
    let vibrato = rng.gen_range(3.0..6.0);
    let depth = rng.gen_range(0.01..0.03);
    let harmonics = ((rate as f64 / 2.0 - 200.0) / (f0 * 1.1)).floor().clamp(1.0, 12.0) as usize;
    let mut phase = 0.0;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let f = f0 * (1.0 + depth * (2.0 * PI * vibrato * t).sin());
            phase += 2.0 * PI * f / rate as f64;
            let s: f64 = (1..=harmonics).map(|h| (h as f64).powf(-tilt) * (h as f64 * phase).sin()).sum();
            s * env[i]
        })
        .collect();
    AudioClip::from_clamped(normalize_peak(raw, 0.6), rate)
}

/// One generated recording.
#[derive(Clone, Debug)]
pub struct CorpusItem {
    pub utterance_id: String,
    pub speaker_id: String,
    pub clip: AudioClip,
}

/// `speakers × clips` filtered-noise recordings. `seed` selects the
/// realization, so training and held-out sets differ only by seed.
pub fn noise_corpus(speakers: usize, clips: usize, seconds: f64, seed: u64) -> Vec<CorpusItem> {
    let mut out = Vec::with_capacity(speakers * clips);
    for s in 0..speakers {
        let profile = SpeakerProfile::nth(s);
        for c in 0..clips {
            let clip_seed = seed.wrapping_mul(1_000_003).wrapping_add((s * 1000 + c) as u64);
            out.push(CorpusItem {
                utterance_id: format!("spk{s}_{seed}_{c:03}"),
                speaker_id: format!("spk{s}"),
                clip: noise_utterance(&profile, seconds, 16_000, clip_seed),
            });
        }
    }
    out
}

/// Two or more harmonic speakers with well separated pitch and tilt.
pub fn harmonic_corpus(speakers: usize, clips: usize, seconds: f64, seed: u64) -> Vec<CorpusItem> {
    let mut out = Vec::with_capacity(speakers * clips);
    for s in 0..speakers {
        let f0 = 110.0 * 1.6f64.powi(s as i32);
        let tilt = 0.6 + 0.5 * s as f64;
        for c in 0..clips {
            let clip_seed = seed.wrapping_mul(999_983).wrapping_add((s * 1000 + c) as u64);
            out.push(CorpusItem {
                utterance_id: format!("voice{s}_{seed}_{c:03}"),
                speaker_id: format!("voice{s}"),
                clip: harmonic_utterance(f0, tilt, seconds, 16_000, clip_seed),
            });
        }
    }
    out
}

/// Two speakers that share envelope and excitation and differ only in one
/// narrow resonance (1400 Hz vs 1600 Hz). Each speaker has one clip.
pub fn twin_resonance_corpus(seconds: f64, seed: u64) -> Vec<CorpusItem> {
    [1400.0, 1600.0]
        .iter()
        .enumerate()
        .map(|(s, &centre)| CorpusItem {
            utterance_id: format!("twin{s}_{seed}"),
            speaker_id: format!("twin{s}"),
            clip: noise_utterance(
                &SpeakerProfile {
                    resonances: vec![(centre, 80.0, 1.0)],
                },
                seconds,
                16_000,
                seed,
            ),
        })
        .collect()
}

/// Fixed pseudo-random unit vector standing in for a trained encoder's
/// output; different `index` values are nearly orthogonal at large `dim`.
pub fn speaker_code(index: u64, dim: usize) -> SpeakerEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(index ^ 0x5eed_c0de);
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SpeakerEmbedding::normalized(v).expect("a random vector is not zero")
}

/// Manifest rows for `items` with `<utterance_id>.wav` paths.
pub fn corpus_manifest(items: &[CorpusItem]) -> Result<Manifest> {
    Manifest::new(
        items
            .iter()
            .map(|item| ManifestRow {
                utterance_id: item.utterance_id.clone(),
                speaker_id: item.speaker_id.clone(),
                path: format!("{}.wav", item.utterance_id).into(),
            })
            .collect(),
    )
}

/// Writes every clip as `<utterance_id>.wav` next to a `manifest.csv` with
/// relative paths, and returns the manifest.
pub fn write_corpus(items: &[CorpusItem], dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = corpus_manifest(items)?;
    for (item, row) in items.iter().zip(&manifest.rows) {
        write_wav(&item.clip, dir.join(&row.path))?;
    }
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}
