use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::dsp::{MelConfig, MelSpectrogram};
use crate::error::{open_err, Error, Result};
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &[u8; 4] = b"SCWR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Encoder,
    Vocoder,
    MelRecord,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            Self::Encoder => 0,
            Self::Vocoder => 1,
            Self::MelRecord => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Self::Encoder),
            1 => Ok(Self::Vocoder),
            2 => Ok(Self::MelRecord),
            _ => Err(Error::Corrupt(format!("unknown model kind {t}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Encoder => "encoder",
            Self::Vocoder => "vocoder",
            Self::MelRecord => "mel-record",
        })
    }
}

/// Named f32 tensors plus a `key=value` config snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub tensors: ParamStore<f32>,
    pub config: IndexMap<String, String>,
    pub step: u64,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, tensors: ParamStore<f32>) -> Self {
        Self {
            kind,
            tensors,
            config: IndexMap::new(),
            step: 0,
        }
    }

    /// Exact byte equality of every tensor and of the metadata.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.step == other.step
            && self.config == other.config
            && self.tensors.bit_eq(&other.tensors)
    }

    pub fn config_value(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint has no `{key}` entry")))
    }

    pub fn config_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.config_value(key)?;
        raw.parse()
            .map_err(|_| Error::Corrupt(format!("checkpoint entry `{key}={raw}` is malformed")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.tensors.iter() {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Data(format!("tensor name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut text = String::new();
        for (k, v) in &self.config {
            if k.contains(['=', '\n']) || v.contains('\n') || k == "step" {
                return Err(Error::Data(format!("config entry `{k}` cannot be stored")));
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        text.push_str(&format!("step={}\n", self.step));
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Corrupt(format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_tag(r.u8()?)?;
        let count = r.u32()?;
        let mut tensors = ParamStore::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.filter(|&n| n <= bytes.len() / 4).ok_or_else(|| Error::Corrupt(format!("tensor `{name}` is too large")))?;
            let payload = r.take(4 * n)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, Tensor::new(&shape, data).map_err(|e| Error::Corrupt(e.to_string()))?);
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Corrupt("config snapshot is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes".into()));
        }
        let mut config = IndexMap::new();
        let mut step = None;
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Corrupt(format!("config line `{line}`")))?;
            if k == "step" {
                step = Some(v.parse().map_err(|_| Error::Corrupt(format!("step `{v}`")))?);
            } else {
                config.insert(k.to_string(), v.to_string());
            }
        }
        Ok(Self {
            kind,
            tensors,
            config,
            step: step.ok_or_else(|| Error::Corrupt("missing step".into()))?,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Data(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &ck.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    Checkpoint::from_bytes(&fs::read(path).map_err(|e| open_err(path, e))?)
}

/// Loads a checkpoint and insists on its kind.
pub fn load_checkpoint_kind(path: impl AsRef<Path>, expected: ModelKind) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.kind != expected {
        return Err(Error::KindMismatch {
            expected: expected.to_string(),
            found: ck.kind.to_string(),
        });
    }
    Ok(ck)
}

pub(crate) fn mel_config_entries(cfg: &MelConfig) -> Vec<(String, String)> {
    vec![
        ("mel.sample_rate".into(), cfg.sample_rate.to_string()),
        ("mel.n_fft".into(), cfg.n_fft.to_string()),
        ("mel.win_length".into(), cfg.win_length.to_string()),
        ("mel.hop_length".into(), cfg.hop_length.to_string()),
        ("mel.n_mels".into(), cfg.n_mels.to_string()),
        ("mel.fmin".into(), cfg.fmin.to_string()),
        ("mel.fmax".into(), cfg.fmax.to_string()),
        ("mel.log_floor".into(), cfg.log_floor.to_string()),
    ]
}

pub(crate) fn mel_config_from(ck: &Checkpoint) -> Result<MelConfig> {
    Ok(MelConfig {
        sample_rate: ck.config_parse("mel.sample_rate")?,
        n_fft: ck.config_parse("mel.n_fft")?,
        win_length: ck.config_parse("mel.win_length")?,
        hop_length: ck.config_parse("mel.hop_length")?,
        n_mels: ck.config_parse("mel.n_mels")?,
        fmin: ck.config_parse("mel.fmin")?,
        fmax: ck.config_parse("mel.fmax")?,
        log_floor: ck.config_parse("mel.log_floor")?,
    })
}

/// Stores a mel matrix as a `[frames, n_mels]` tensor record, the format
/// external acoustic models hand to the vocoder.
pub fn save_mel_record(mel: &MelSpectrogram, path: impl AsRef<Path>) -> Result<()> {
    let mut tensors = ParamStore::new();
    tensors.insert("mel", Tensor::new(&[mel.frames(), mel.n_mels()], mel.values().to_vec())?);
    let mut ck = Checkpoint::new(ModelKind::MelRecord, tensors);
    ck.config.extend(mel_config_entries(mel.config()));
    save_checkpoint(&ck, path)
}

pub fn load_mel_record(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let ck = load_checkpoint_kind(path, ModelKind::MelRecord)?;
    let cfg = mel_config_from(&ck)?;
    let t = ck.tensors.get("mel").map_err(|_| Error::Corrupt("mel record has no `mel` tensor".into()))?;
    let (frames, n) = t.dims2().map_err(|e| Error::Corrupt(e.to_string()))?;
    if n != cfg.n_mels {
        return Err(Error::Corrupt(format!("mel tensor has {n} bands, config says {}", cfg.n_mels)));
    }
    MelSpectrogram::new(t.data().to_vec(), frames, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut t = ParamStore::new();
        t.insert("a", Tensor::new(&[2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, 1e-30, -7.25]).unwrap());
        t.insert("b", Tensor::scalar(4.0f32));
        let mut ck = Checkpoint::new(ModelKind::Encoder, t);
        ck.config.insert("encoder.hidden".into(), "8".into());
        ck.step = 17;
        ck
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert!(back.bit_eq(&ck));
    }

    #[test]
    fn every_truncation_is_corrupt() {
        let bytes = sample().to_bytes().unwrap();
        for n in 0..bytes.len() {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..n]), Err(Error::Corrupt(_))), "{n}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Corrupt(_))));
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn kind_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        assert!(matches!(
            load_checkpoint_kind(&path, ModelKind::Vocoder),
            Err(Error::KindMismatch { .. })
        ));
        assert!(load_checkpoint_kind(&path, ModelKind::Encoder).is_ok());
    }
}
