use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::{index::sample, SliceRandom};
use rand::Rng;

use crate::encoder::SpeakerEmbedding;
use crate::error::{open_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub speaker_id: String,
    pub path: PathBuf,
}

/// Utterance list, CSV `utterance_id,speaker_id,path` with a header row.
/// Relative paths are resolved against the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.utterance_id.as_str()) {
                return Err(Error::Data(format!("duplicate utterance id `{}`", r.utterance_id)));
            }
        }
        Ok(Self { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let mut reader = csv::Reader::from_path(path).map_err(|e| open_err(path, e))?;
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["utterance_id", "speaker_id", "path"] {
            return Err(Error::Data(format!(
                "{}: expected header `utterance_id,speaker_id,path`",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let p = PathBuf::from(&rec[2]);
            rows.push(ManifestRow {
                utterance_id: rec[0].to_string(),
                speaker_id: rec[1].to_string(),
                path: if p.is_absolute() { p } else { base.join(p) },
            });
        }
        Self::new(rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["utterance_id", "speaker_id", "path"])?;
        for r in &self.rows {
            w.write_record([r.utterance_id.as_str(), r.speaker_id.as_str(), &r.path.to_string_lossy()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Row indices grouped by speaker, in first-appearance order.
    pub fn by_speaker(&self) -> IndexMap<&str, Vec<usize>> {
        let mut out: IndexMap<&str, Vec<usize>> = IndexMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            out.entry(r.speaker_id.as_str()).or_default().push(i);
        }
        out
    }

    /// Checks the GE2E requirement of two speakers with two utterances each.
    pub fn validate_for_ge2e(&self) -> Result<()> {
        let eligible = self.by_speaker().values().filter(|v| v.len() >= 2).count();
        if eligible < 2 {
            return Err(Error::Data("GE2E training needs at least 2 speakers with 2 utterances each".into()));
        }
        Ok(())
    }
}

/// Draws GE2E batches as manifest row indices, speaker-major: `S`
/// distinct speakers, each with `U` distinct utterances.
#[derive(Clone, Debug)]
pub struct Ge2eSampler {
    groups: Vec<Vec<usize>>,
    pub speakers: usize,
    pub utterances: usize,
}

impl Ge2eSampler {
    /// Sampler over the speakers with at least `utterances` recordings.
    pub fn new(manifest: &Manifest, speakers: usize, utterances: usize) -> Result<Self> {
        manifest.validate_for_ge2e()?;
        if speakers < 2 || utterances < 2 {
            return Err(Error::Config(format!("S={speakers}, U={utterances}: both must be at least 2")));
        }
        let groups: Vec<Vec<usize>> = manifest
            .by_speaker()
            .into_values()
            .filter(|v| v.len() >= utterances)
            .collect();
        if groups.len() < speakers {
            return Err(Error::Config(format!(
                "only {} speakers have {utterances} utterances, S={speakers} requested",
                groups.len()
            )));
        }
        Ok(Self {
            groups,
            speakers,
            utterances,
        })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Vec<usize> {
        let picked = sample(rng, self.groups.len(), self.speakers);
        let mut out = Vec::with_capacity(self.speakers * self.utterances);
        for s in picked.iter() {
            out.extend(self.groups[s].choose_multiple(rng, self.utterances).copied());
        }
        out
    }
}

/// Endless stream of batches from one RNG.
pub struct Ge2eBatches<R> {
    sampler: Ge2eSampler,
    rng: R,
}

impl<R: Rng> Iterator for Ge2eBatches<R> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.sampler.draw(&mut self.rng))
    }
}

pub fn make_ge2e_batches<R: Rng>(
    manifest: &Manifest,
    speakers: usize,
    utterances: usize,
    rng: R,
) -> Result<Ge2eBatches<R>> {
    Ok(Ge2eBatches {
        sampler: Ge2eSampler::new(manifest, speakers, utterances)?,
        rng,
    })
}

/// Per-utterance embeddings, CSV `utterance_id,speaker_id,e_0,…,e_{D-1}`
/// with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingTable {
    rows: IndexMap<String, (String, SpeakerEmbedding)>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Width of the stored embeddings, 0 when empty.
    pub fn dim(&self) -> usize {
        self.rows.values().next().map_or(0, |(_, e)| e.dim())
    }

    pub fn insert(&mut self, utterance_id: &str, speaker_id: &str, embedding: SpeakerEmbedding) -> Result<()> {
        if !self.is_empty() && embedding.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "embedding for `{utterance_id}` has {} dims, the table has {}",
                embedding.dim(),
                self.dim()
            )));
        }
        if self.rows.contains_key(utterance_id) {
            return Err(Error::Data(format!("duplicate utterance id `{utterance_id}`")));
        }
        self.rows.insert(utterance_id.to_string(), (speaker_id.to_string(), embedding));
        Ok(())
    }

    pub fn get(&self, utterance_id: &str) -> Result<&SpeakerEmbedding> {
        self.rows
            .get(utterance_id)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Data(format!("no embedding row for utterance `{utterance_id}`")))
    }

    /// `(utterance_id, speaker_id, embedding)` in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &SpeakerEmbedding)> {
        self.rows.iter().map(|(u, (s, e))| (u.as_str(), s.as_str(), e))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["utterance_id".to_string(), "speaker_id".to_string()];
        header.extend((0..self.dim()).map(|i| format!("e_{i}")));
        w.write_record(&header)?;
        for (u, s, e) in self.iter() {
            let mut rec = vec![u.to_string(), s.to_string()];
            rec.extend(e.values().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| open_err(path, e))?;
        let headers = reader.headers()?.clone();
        let ok = headers.len() > 2
            && &headers[0] == "utterance_id"
            && &headers[1] == "speaker_id"
            && headers.iter().skip(2).enumerate().all(|(i, h)| h == format!("e_{i}"));
        if !ok {
            return Err(Error::Data(format!(
                "{}: expected header `utterance_id,speaker_id,e_0,...`",
                path.display()
            )));
        }
        let mut table = Self::new();
        for rec in reader.records() {
            let rec = rec?;
            let values = rec
                .iter()
                .skip(2)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Data(format!("{}: bad embedding value `{v}`", path.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            // rows we wrote are unit-norm already; anything else is normalized
            let e = match SpeakerEmbedding::from_unit(values.clone()) {
                Ok(e) => e,
                Err(_) => SpeakerEmbedding::normalized(values)?,
            };
            table.insert(&rec[0], &rec[1], e)?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn manifest(speakers: usize, utts: usize) -> Manifest {
        let rows = (0..speakers)
            .flat_map(|s| {
                (0..utts).map(move |u| ManifestRow {
                    utterance_id: format!("s{s}u{u}"),
                    speaker_id: format!("s{s}"),
                    path: PathBuf::from(format!("s{s}u{u}.wav")),
                })
            })
            .collect();
        Manifest::new(rows).unwrap()
    }

    #[test]
    fn batches_have_distinct_speakers_and_utterances() {
        let m = manifest(4, 3);
        for batch in make_ge2e_batches(&m, 4, 2, ChaCha8Rng::seed_from_u64(1)).unwrap().take(50) {
            assert_eq!(batch.len(), 8);
            let speakers: HashSet<_> = batch.iter().map(|&i| &m.rows[i].speaker_id).collect();
            assert_eq!(speakers.len(), 4);
            let utts: HashSet<_> = batch.iter().collect();
            assert_eq!(utts.len(), 8);
            for pair in batch.chunks(2) {
                assert_eq!(m.rows[pair[0]].speaker_id, m.rows[pair[1]].speaker_id);
            }
        }
    }

    #[test]
    fn infeasible_requests() {
        let m = manifest(4, 3);
        assert!(make_ge2e_batches(&m, 5, 2, ChaCha8Rng::seed_from_u64(1)).is_err());
        assert!(make_ge2e_batches(&m, 2, 4, ChaCha8Rng::seed_from_u64(1)).is_err());
        assert!(make_ge2e_batches(&manifest(1, 5), 1, 2, ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = manifest(5, 4);
        let a: Vec<_> = make_ge2e_batches(&m, 3, 2, ChaCha8Rng::seed_from_u64(9)).unwrap().take(20).collect();
        let b: Vec<_> = make_ge2e_batches(&m, 3, 2, ChaCha8Rng::seed_from_u64(9)).unwrap().take(20).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        manifest(2, 2).save(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back.rows.len(), 4);
        assert_eq!(back.rows[0].path, dir.path().join("s0u0.wav"));
    }

    #[test]
    fn embedding_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = EmbeddingTable::new();
        t.insert("a", "s0", SpeakerEmbedding::normalized(vec![0.3, -0.4, 1.0]).unwrap()).unwrap();
        t.insert("b", "s1", SpeakerEmbedding::normalized(vec![1e-9, 2.0, -7.5]).unwrap()).unwrap();
        let path = dir.path().join("e.csv");
        t.save(&path).unwrap();
        let back = EmbeddingTable::load(&path).unwrap();
        assert_eq!(back, t);
        assert!(matches!(back.get("zzz"), Err(Error::Data(m)) if m.contains("zzz")));
        let wrong = SpeakerEmbedding::normalized(vec![1.0, 0.0]).unwrap();
        assert!(matches!(t.insert("c", "s0", wrong), Err(Error::Shape(_))));
    }
}
