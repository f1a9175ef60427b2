use super::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_VAD_THRESHOLD_DB: f64 = 30.0;

const FRAME_SECONDS: f64 = 0.025;
const HOP_SECONDS: f64 = 0.010;

fn energy(samples: &[f32]) -> f64 {
    samples.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

/// Per 10 ms block: RMS over the 25 ms frame centred on the block
/// (zero-padded past the clip edges), and RMS over the block itself.
fn block_levels(samples: &[f32], win: usize, hop: usize) -> Vec<(f64, f64)> {
    let n = samples.len();
    let lead = (win.saturating_sub(hop) / 2) as isize;
    (0..n.div_ceil(hop))
        .map(|b| {
            let start = (b * hop) as isize - lead;
            let lo = start.max(0) as usize;
            let hi = ((start + win as isize).max(0) as usize).min(n);
            let frame = (energy(&samples[lo..hi]) / win as f64).sqrt();
            let own = &samples[b * hop..((b + 1) * hop).min(n)];
            (frame, (energy(own) / own.len() as f64).sqrt())
        })
        .collect()
}

/// Removes leading and trailing 10 ms blocks that are more than
/// `threshold_db` below the loudest 25 ms frame. A block counts as active
/// when both its centred frame and the block itself reach that level.
/// Interior blocks are always kept, so the result is one contiguous span of
/// the input.
pub fn vad_trim(clip: &AudioClip, threshold_db: f64) -> Result<AudioClip> {
    if !(threshold_db > 0.0) {
        return Err(Error::Config(format!("VAD threshold must be > 0 dB, got {threshold_db}")));
    }
    let sr = clip.sample_rate() as f64;
    let win = (FRAME_SECONDS * sr).round() as usize;
    let hop = (HOP_SECONDS * sr).round() as usize;
    let levels = block_levels(clip.samples(), win.max(1), hop.max(1));
    let peak = levels.iter().map(|l| l.0).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Data("clip has no voice activity above the VAD threshold".into()));
    }
    let floor = peak * 10f64.powf(-threshold_db / 20.0);
    let active = |l: &(f64, f64)| l.0 >= floor && l.1 >= floor;
    let first = levels.iter().position(active);
    let last = levels.iter().rposition(active);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::Data("clip has no voice activity above the VAD threshold".into()));
    };
    let end = ((last + 1) * hop).min(clip.len());
    Ok(clip.slice(first * hop, end))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, freq: f32) -> Vec<f32> {
        (0..n)
            .map(|i| 0.5 * (2.0 * std::f32::consts::PI * freq * i as f32 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn pure_tone_is_unchanged() {
        let clip = AudioClip::new(tone(16_123, 220.0), 16_000).unwrap();
        assert_eq!(vad_trim(&clip, 30.0).unwrap(), clip);
    }

    #[test]
    fn silence_around_tone_is_removed_to_within_a_hop() {
        let mut s = vec![0.0; 8000];
        s.extend(tone(12_000, 330.0));
        s.extend(vec![0.0; 8000]);
        let clip = AudioClip::new(s, 16_000).unwrap();
        let trimmed = vad_trim(&clip, 30.0).unwrap();
        // the tone occupies [8000, 20000)
        let hop = 160;
        assert!(trimmed.len() >= 12_000 && trimmed.len() <= 12_000 + 2 * hop);
        let lead = clip
            .samples()
            .windows(trimmed.len())
            .position(|w| w == trimmed.samples())
            .unwrap();
        assert!(lead <= 8000 && 8000 - lead < hop);
        assert!(lead + trimmed.len() >= 20_000 && lead + trimmed.len() - 20_000 < hop);
    }

    #[test]
    fn all_zero_is_an_error() {
        let clip = AudioClip::new(vec![0.0; 4000], 16_000).unwrap();
        assert!(matches!(vad_trim(&clip, 30.0), Err(Error::Data(_))));
    }

    #[test]
    fn non_positive_threshold_is_rejected() {
        let clip = AudioClip::new(tone(4000, 100.0), 16_000).unwrap();
        assert!(vad_trim(&clip, 0.0).is_err());
    }
}
