use crate::dsp::{mel_spectrogram, AudioClip, MelConfig};
use crate::error::{Error, Result};

/// Mean absolute difference of vocoder-profile log-mel matrices. The longer
/// clip is truncated to the shorter one first.
pub fn mel_l1(a: &AudioClip, b: &AudioClip) -> Result<f64> {
    mel_l1_with(a, b, &MelConfig { sample_rate: a.sample_rate(), ..MelConfig::vocoder() })
}

/// [`mel_l1`] with an explicit feature profile.
pub fn mel_l1_with(a: &AudioClip, b: &AudioClip, cfg: &MelConfig) -> Result<f64> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::Data(format!(
            "sample rates differ: {} vs {}",
            a.sample_rate(),
            b.sample_rate()
        )));
    }
    let n = a.len().min(b.len());
    if n == 0 {
        return Err(Error::Data("empty clip".into()));
    }
    let ma = mel_spectrogram(&a.slice(0, n), cfg)?;
    let mb = mel_spectrogram(&b.slice(0, n), cfg)?;
    let total: f64 = ma
        .values()
        .iter()
        .zip(mb.values())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum();
    Ok(total / ma.values().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f32, n: usize) -> AudioClip {
        AudioClip::new((0..n).map(|i| 0.5 * (f * i as f32 / 16000.0 * std::f32::consts::TAU).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn identity_and_symmetry() {
        let a = tone(220.0, 4000);
        let b = tone(330.0, 4100);
        assert_eq!(mel_l1(&a, &a).unwrap(), 0.0);
        assert_eq!(mel_l1(&a, &b).unwrap(), mel_l1(&b, &a).unwrap());
        assert!(mel_l1(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn rate_mismatch() {
        let a = tone(220.0, 4000);
        let b = AudioClip::new(vec![0.0; 4000], 22050).unwrap();
        assert!(matches!(mel_l1(&a, &b), Err(Error::Data(_))));
    }
}
