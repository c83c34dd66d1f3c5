//! Flat fingerprint database with exact cosine (dot-product) search.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::binio::{self, FormatError};
use crate::dsp::{segment, AudioBuffer, DspError, Featurizer};
use crate::encoder::{Embedding, EncoderError, Model};
use crate::par::{self, Execution};

const DB_MAGIC: &[u8; 4] = b"CFDB";
pub const DB_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("fingerprint database is empty")]
    Empty,
    #[error("embedding dimension mismatch: database has {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("duplicate record ({track_id}, {offset})")]
    Duplicate { track_id: String, offset: f64 },
    #[error("invalid offset {0} (must be finite and >= 0)")]
    InvalidOffset(f64),
    #[error("k = {k} outside [1, {size}]")]
    InvalidK { k: usize, size: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRecord {
    pub track_id: String,
    /// Seconds from the start of the track.
    pub offset: f64,
    pub embedding: Embedding,
}

/// One ranked segment match.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub track_id: String,
    pub offset: f64,
    pub score: f64,
}

/// One ranked track: its best-matching segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHit {
    pub track_id: String,
    pub offset: f64,
    pub score: f64,
}

/// Where a query's true track lands in the rankings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRank {
    /// 0-based position of the track's best record among all records.
    pub segment: usize,
    /// 0-based position of the track among tracks ranked by best record.
    pub track: usize,
    pub score: f64,
}

/// Ranking order: score descending, then track id and offset ascending.
fn rank(a: (f64, &str, f64), b: (f64, &str, f64)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.2.total_cmp(&b.2))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FingerprintDb {
    dim: usize,
    track_ids: Vec<String>,
    offsets: Vec<f64>,
    data: Vec<f32>,
    keys: HashSet<(String, u64)>,
}

impl FingerprintDb {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.track_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.track_ids.is_empty()
    }

    pub fn record(&self, i: usize) -> (&str, f64, &[f32]) {
        (&self.track_ids[i], self.offsets[i], &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Distinct track ids in insertion order.
    pub fn tracks(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.track_ids
            .iter()
            .filter(|t| seen.insert(t.as_str()))
            .map(String::as_str)
            .collect()
    }

    pub fn insert(&mut self, record: FingerprintRecord) -> Result<(), IndexError> {
        if record.embedding.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                found: record.embedding.dim(),
            });
        }
        if !(record.offset.is_finite() && record.offset >= 0.0) {
            return Err(IndexError::InvalidOffset(record.offset));
        }
        // re-validates the unit-norm invariant for embeddings built from raw values
        let embedding = Embedding::new(record.embedding.into_values())?;
        if !self.keys.insert((record.track_id.clone(), record.offset.to_bits())) {
            return Err(IndexError::Duplicate {
                track_id: record.track_id,
                offset: record.offset,
            });
        }
        self.track_ids.push(record.track_id);
        self.offsets.push(record.offset);
        self.data.extend_from_slice(embedding.values());
        Ok(())
    }

    /// Segments `audio` with `hop` seconds between segment starts, embeds
    /// every segment in eval mode and inserts them. Returns the number of
    /// records added.
    pub fn add_track(
        &mut self,
        track_id: &str,
        audio: &AudioBuffer,
        model: &Model<f32>,
        featurizer: &Featurizer,
        hop: f64,
        exec: Execution,
    ) -> Result<usize, IndexError> {
        let segments = segment(audio, featurizer.config(), hop)?;
        let specs = par::try_map(exec, &segments, |s| featurizer.log_mel(&s.audio))?;
        let embeddings = model.embed_batch_with(&specs, exec)?;
        let n = segments.len();
        for (s, e) in segments.into_iter().zip(embeddings) {
            self.insert(FingerprintRecord {
                track_id: track_id.to_string(),
                offset: s.start_time,
                embedding: e,
            })?;
        }
        Ok(n)
    }

    fn check_query(&self, query: &Embedding) -> Result<(), IndexError> {
        if self.is_empty() {
            return Err(IndexError::Empty);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        Ok(())
    }

    /// Similarity of `query` to every record, in record order.
    pub fn scores(&self, query: &Embedding) -> Result<Vec<f64>, IndexError> {
        self.check_query(query)?;
        let q = query.values();
        Ok(self
            .data
            .chunks_exact(self.dim)
            .map(|row| crate::encoder::embedding::dot(q, row).clamp(-1.0, 1.0))
            .collect())
    }

    /// Ranks of `track_id` for `query` without sorting the database;
    /// `None` if the track has no records. A segment-granular hit at k is
    /// `segment < k`, a track-granular hit `track < k`.
    pub fn match_rank(&self, query: &Embedding, track_id: &str) -> Result<Option<MatchRank>, IndexError> {
        let scores = self.scores(query)?;
        let key = |i: usize| (scores[i], self.track_ids[i].as_str(), self.offsets[i]);
        let mut best: HashMap<&str, usize> = HashMap::new();
        for i in 0..self.len() {
            let e = best.entry(self.track_ids[i].as_str()).or_insert(i);
            if rank(key(i), key(*e)) == Ordering::Less {
                *e = i;
            }
        }
        let Some(&target) = best.get(track_id) else {
            return Ok(None);
        };
        let before = |i: usize| rank(key(i), key(target)) == Ordering::Less;
        Ok(Some(MatchRank {
            segment: (0..self.len()).filter(|&i| before(i)).count(),
            track: best.values().filter(|&&i| before(i)).count(),
            score: scores[target],
        }))
    }

    /// Exact top-`k` records by dot product.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<Hit>, IndexError> {
        let scores = self.scores(query)?;
        if k == 0 || k > self.len() {
            return Err(IndexError::InvalidK { k, size: self.len() });
        }
        let key = |i: usize| (scores[i], self.track_ids[i].as_str(), self.offsets[i]);
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let cmp = |a: &usize, b: &usize| rank(key(*a), key(*b));
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, cmp);
            idx.truncate(k);
        }
        idx.sort_unstable_by(cmp);
        Ok(idx
            .into_iter()
            .map(|i| Hit {
                track_id: self.track_ids[i].clone(),
                offset: self.offsets[i],
                score: scores[i],
            })
            .collect())
    }

    pub fn search_batch(&self, queries: &[Embedding], k: usize, exec: Execution) -> Result<Vec<Vec<Hit>>, IndexError> {
        par::try_map(exec, queries, |q| self.search(q, k))
    }

    /// Tracks ranked by their best segment similarity over all `queries`
    /// (one per query segment); at most `k` tracks.
    pub fn search_tracks(&self, queries: &[Embedding], k: usize) -> Result<Vec<TrackHit>, IndexError> {
        if queries.is_empty() {
            return Err(IndexError::InvalidK { k: 0, size: 0 });
        }
        let mut best: HashMap<&str, (f64, f64)> = HashMap::new();
        for q in queries {
            let scores = self.scores(q)?;
            for (i, &s) in scores.iter().enumerate() {
                let e = best.entry(self.track_ids[i].as_str()).or_insert((f64::NEG_INFINITY, 0.0));
                if rank((s, "", self.offsets[i]), (e.0, "", e.1)) == Ordering::Less {
                    *e = (s, self.offsets[i]);
                }
            }
        }
        let n_tracks = best.len();
        if k == 0 || k > n_tracks {
            return Err(IndexError::InvalidK { k, size: n_tracks });
        }
        let mut ranked: Vec<TrackHit> = best
            .into_iter()
            .map(|(t, (score, offset))| TrackHit {
                track_id: t.to_string(),
                offset,
                score,
            })
            .collect();
        ranked.sort_by(|a, b| rank((a.score, &a.track_id, a.offset), (b.score, &b.track_id, b.offset)));
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Identifies the track a query recording comes from: the query is
    /// segmented with `hop`, each segment embedded, and tracks ranked by
    /// their best segment similarity.
    pub fn match_track(
        &self,
        audio: &AudioBuffer,
        model: &Model<f32>,
        featurizer: &Featurizer,
        hop: f64,
        k: usize,
    ) -> Result<Vec<TrackHit>, IndexError> {
        if self.is_empty() {
            return Err(IndexError::Empty);
        }
        let segments = segment(audio, featurizer.config(), hop)?;
        let specs = segments
            .iter()
            .map(|s| featurizer.log_mel(&s.audio))
            .collect::<Result<Vec<_>, _>>()?;
        let embeddings = model.embed_batch(&specs)?;
        let k = k.min(self.tracks().len());
        self.search_tracks(&embeddings, k)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FormatError> {
        binio::write_magic(w, DB_MAGIC, DB_VERSION)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        for i in 0..self.len() {
            let (t, o, v) = self.record(i);
            binio::write_str(w, t)?;
            w.write_f64::<LittleEndian>(o)?;
            binio::write_f32s(w, v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, IndexError> {
        binio::read_magic(r, DB_MAGIC, "fingerprint database", DB_VERSION)?;
        let dim = r.read_u32::<LittleEndian>().map_err(FormatError::from)? as usize;
        let count = r.read_u64::<LittleEndian>().map_err(FormatError::from)?;
        if dim == 0 || dim > 1 << 16 {
            return Err(FormatError::Malformed(format!("embedding dimension {dim}")).into());
        }
        let mut db = Self::new(dim);
        for _ in 0..count {
            let track_id = binio::read_str(r)?;
            let offset = r.read_f64::<LittleEndian>().map_err(FormatError::from)?;
            let values = binio::read_f32s(r, dim)?;
            db.insert(FingerprintRecord {
                track_id,
                offset,
                embedding: Embedding::new(values)?,
            })?;
        }
        binio::expect_eof(r)?;
        Ok(db)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let io = |source| IndexError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_to(&mut w)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(&mut BufReader::new(file))
    }
}
