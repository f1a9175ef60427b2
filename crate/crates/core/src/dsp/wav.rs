use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{open_err, Error, Result};

/// Reads a 16-bit PCM mono RIFF/WAVE file; sample `v` becomes `v / 32768`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => open_err(path, io),
        other => Error::Data(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Data(format!(
            "{}: expected mono audio, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Data(format!(
            "{}: unsupported encoding ({:?}, {} bits); need 16-bit PCM",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Quantizes a sample the way [`write_wav`] does.
pub(crate) fn quantize_pcm16(v: f32) -> i16 {
    (v * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a 16-bit PCM mono file; sample `v` becomes
/// `clamp(round(v * 32767), -32768, 32767)`.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    if clip.is_empty() {
        return Err(Error::Data("refusing to write an empty clip".into()));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &v in clip.samples() {
        writer.write_sample(quantize_pcm16(v))?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, samples: &[i16], channels: u16, rate: u32) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn quantization_edges() {
        assert_eq!(quantize_pcm16(1.0), 32767);
        assert_eq!(quantize_pcm16(-1.0), -32767);
        assert_eq!(quantize_pcm16(0.0), 0);
        assert_eq!(quantize_pcm16(2.0), 32767);
        assert_eq!(quantize_pcm16(-2.0), -32768);
    }

    #[test]
    fn load_scales_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, &[16384, -32768, 0], 1, 16_000);
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.samples(), &[0.5, -1.0, 0.0]);
        assert_eq!(clip.sample_rate(), 16_000);
    }

    #[test]
    fn one_second_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        write_raw(&p, &vec![100; 16_000], 1, 16_000);
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.len(), 16_000);
        assert_eq!(clip.duration(), 1.0);
    }

    #[test]
    fn rejects_stereo_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, &[1, 2, 3, 4], 2, 16_000);
        assert!(matches!(load_wav(&p), Err(Error::Data(_))));
        let missing = load_wav(dir.path().join("nope.wav")).unwrap_err();
        assert!(matches!(&missing, Error::Data(m) if m.contains("nope.wav")), "{missing}");
    }

    #[test]
    fn rejects_float_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&p), Err(Error::Data(_))));
    }

    #[test]
    fn pcm_round_trip_is_exact_below_half_scale() {
        // load divides by 32768 and write multiplies by 32767, so integer
        // codes survive a load/write cycle unchanged while |v| <= 16384 and
        // drift by at most one code above that.
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("in.wav"), dir.path().join("out.wav"));
        let codes: Vec<i16> = (-32768..=32767).step_by(7).map(|v| v as i16).collect();
        write_raw(&a, &codes, 1, 16_000);
        write_wav(&load_wav(&a).unwrap(), &b).unwrap();
        let back: Vec<i16> = WavReader::open(&b)
            .unwrap()
            .into_samples::<i16>()
            .map(|s| s.unwrap())
            .collect();
        for (&c, &r) in codes.iter().zip(&back) {
            if c.unsigned_abs() <= 16384 {
                assert_eq!(c, r);
            } else {
                assert!((c as i32 - r as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn empty_clip_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let clip = AudioClip::new(vec![], 16_000).unwrap();
        assert!(write_wav(&clip, dir.path().join("e.wav")).is_err());
    }
}
