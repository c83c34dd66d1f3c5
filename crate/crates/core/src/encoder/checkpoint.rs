use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ConformerConfig, EncoderError, Model};
use crate::autodiff::{AdamState, DType, ParamStore, Real, Tensor};
use crate::binio::{self, FormatError};
use crate::dsp::mel::{read_spectral_config, write_spectral_config};
use crate::dsp::SpectralConfig;

const CHECKPOINT_MAGIC: &[u8; 4] = b"CFCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_RANK: usize = 8;

/// Bookkeeping stored next to the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub steps: u64,
    pub epochs: u64,
    pub seed: u64,
    pub best_loss: f64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            steps: 0,
            epochs: 0,
            seed: 0,
            best_loss: f64::INFINITY,
        }
    }
}

/// A model together with the front-end config it was trained on and,
/// optionally, the optimizer state needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T: Real> {
    pub model: Model<T>,
    pub spectral: SpectralConfig,
    pub meta: TrainingMeta,
    pub adam: Option<AdamState<T>>,
}

fn write_model_config<W: Write>(w: &mut W, c: &ConformerConfig) -> std::io::Result<()> {
    for v in [
        c.encoder_dim,
        c.n_layers,
        c.n_heads,
        c.conv_kernel_size,
        c.embedding_dim,
        c.n_mels,
        c.ffn_expansion,
        c.max_frames,
    ] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_f64::<LittleEndian>(c.dropout_rate)?;
    w.write_u8(u8::from(c.positional_embedding))
}

fn read_model_config<R: Read>(r: &mut R) -> Result<ConformerConfig, FormatError> {
    let mut next = || r.read_u32::<LittleEndian>().map(|v| v as usize);
    let (encoder_dim, n_layers, n_heads, conv_kernel_size) = (next()?, next()?, next()?, next()?);
    let (embedding_dim, n_mels, ffn_expansion, max_frames) = (next()?, next()?, next()?, next()?);
    let dropout_rate = r.read_f64::<LittleEndian>()?;
    let positional_embedding = match r.read_u8()? {
        0 => false,
        1 => true,
        b => return Err(FormatError::Malformed(format!("bad boolean byte {b}"))),
    };
    Ok(ConformerConfig {
        encoder_dim,
        n_layers,
        n_heads,
        conv_kernel_size,
        embedding_dim,
        n_mels,
        dropout_rate,
        ffn_expansion,
        positional_embedding,
        max_frames,
    })
}

fn write_tensor<W: Write, T: Real>(w: &mut W, t: &Tensor<T>, dtype: DType) -> std::io::Result<()> {
    w.write_u8(t.rank() as u8)?;
    for &d in t.shape() {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    match dtype {
        DType::F32 => binio::write_f32s(w, &t.data().iter().map(|v| v.f64() as f32).collect::<Vec<_>>()),
        DType::F64 => binio::write_f64s(w, &t.data().iter().map(|v| v.f64()).collect::<Vec<_>>()),
    }
}

fn read_tensor<R: Read, T: Real>(r: &mut R, dtype: DType) -> Result<Tensor<T>, FormatError> {
    let rank = r.read_u8()? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(FormatError::Malformed(format!("tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= 1 << 30)
        .ok_or_else(|| FormatError::Malformed(format!("tensor shape {shape:?} too large")))?;
    let data = match dtype {
        DType::F32 => binio::read_f32s(r, n)?.into_iter().map(|v| T::c(f64::from(v))).collect(),
        DType::F64 => binio::read_f64s(r, n)?.into_iter().map(T::c).collect(),
    };
    Tensor::new(shape, data).map_err(|e| FormatError::Malformed(e.to_string()))
}

fn dtype_from_tag(tag: u8) -> Result<DType, FormatError> {
    match tag {
        4 => Ok(DType::F32),
        8 => Ok(DType::F64),
        t => Err(FormatError::Malformed(format!("unknown dtype tag {t}"))),
    }
}

impl<T: Real> ModelCheckpoint<T> {
    pub fn new(model: Model<T>, spectral: SpectralConfig) -> Self {
        Self {
            model,
            spectral,
            meta: TrainingMeta::default(),
            adam: None,
        }
    }

    /// Serializes in the model's own precision.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), EncoderError> {
        let dtype = T::DTYPE;
        binio::write_magic(w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION).map_err(FormatError::from)?;
        let io = |e: std::io::Error| EncoderError::Format(e.into());
        w.write_u8(dtype.tag()).map_err(io)?;
        write_model_config(w, self.model.config()).map_err(io)?;
        write_spectral_config(w, &self.spectral).map_err(io)?;
        w.write_u64::<LittleEndian>(self.meta.steps).map_err(io)?;
        w.write_u64::<LittleEndian>(self.meta.epochs).map_err(io)?;
        w.write_u64::<LittleEndian>(self.meta.seed).map_err(io)?;
        w.write_f64::<LittleEndian>(self.meta.best_loss).map_err(io)?;
        let params = self.model.params();
        w.write_u32::<LittleEndian>(params.len() as u32).map_err(io)?;
        for p in params.iter() {
            binio::write_str(w, &p.name).map_err(io)?;
            write_tensor(w, &p.value, dtype).map_err(io)?;
        }
        match &self.adam {
            None => w.write_u8(0).map_err(io)?,
            Some(state) => {
                w.write_u8(1).map_err(io)?;
                w.write_u64::<LittleEndian>(state.step).map_err(io)?;
                for t in state.m.iter().chain(&state.v) {
                    write_tensor(w, t, dtype).map_err(io)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a checkpoint of either precision, converting to `T`.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, EncoderError> {
        binio::read_magic(r, CHECKPOINT_MAGIC, "checkpoint", CHECKPOINT_VERSION)?;
        let dtype = dtype_from_tag(r.read_u8().map_err(FormatError::from)?)?;
        let cfg = read_model_config(r)?;
        let spectral = read_spectral_config(r)?;
        let mut u64s = [0u64; 3];
        for v in &mut u64s {
            *v = r.read_u64::<LittleEndian>().map_err(FormatError::from)?;
        }
        let best_loss = r.read_f64::<LittleEndian>().map_err(FormatError::from)?;
        let meta = TrainingMeta {
            steps: u64s[0],
            epochs: u64s[1],
            seed: u64s[2],
            best_loss,
        };
        let count = r.read_u32::<LittleEndian>().map_err(FormatError::from)? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = binio::read_str(r)?;
            let t = read_tensor(r, dtype)?;
            params.insert(name, t)?;
        }
        let model = Model::from_params(cfg, params)?;
        let adam = match r.read_u8().map_err(FormatError::from)? {
            0 => None,
            1 => {
                let step = r.read_u64::<LittleEndian>().map_err(FormatError::from)?;
                let mut read_all = || -> Result<Vec<Tensor<T>>, FormatError> {
                    (0..count).map(|_| read_tensor(r, dtype)).collect()
                };
                let m = read_all()?;
                let v = read_all()?;
                for (i, (mt, vt)) in m.iter().zip(&v).enumerate() {
                    let want = model.params().get(i).shape();
                    if mt.shape() != want || vt.shape() != want {
                        return Err(EncoderError::CheckpointMismatch(format!(
                            "optimizer state for {} has wrong shape",
                            model.params().name(i)
                        )));
                    }
                }
                Some(AdamState { step, m, v })
            }
            b => return Err(FormatError::Malformed(format!("bad optimizer flag {b}")).into()),
        };
        binio::expect_eof(r)?;
        if spectral.n_mels != cfg.n_mels {
            return Err(EncoderError::CheckpointMismatch(format!(
                "front end has {} mel bands, model expects {}",
                spectral.n_mels, cfg.n_mels
            )));
        }
        Ok(Self {
            model,
            spectral,
            meta,
            adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        let path = path.as_ref();
        let io = |source| EncoderError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_to(&mut w)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| EncoderError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(&mut BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> ModelCheckpoint<f32> {
        let cfg = ConformerConfig::tiny();
        let model = Model::build(cfg, 5).unwrap();
        let mut ck = ModelCheckpoint::new(model, SpectralConfig::default().with_n_mels(cfg.n_mels));
        ck.meta = TrainingMeta {
            steps: 12,
            epochs: 3,
            seed: 5,
            best_loss: 1.25,
        };
        let mut adam = AdamState::new(ck.model.params());
        adam.step = 12;
        adam.m[0].data_mut()[0] = 0.5;
        adam.v[1].data_mut()[0] = 0.25;
        ck.adam = Some(adam);
        ck
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ck.save(&path).unwrap();
        assert_eq!(ModelCheckpoint::<f32>::load(&path).unwrap(), ck);
        let mut without = ck.clone();
        without.adam = None;
        let mut buf = Vec::new();
        without.write_to(&mut buf).unwrap();
        assert_eq!(ModelCheckpoint::<f32>::read_from(&mut buf.as_slice()).unwrap(), without);
    }

    #[test]
    fn precision_converts_on_load() {
        let ck = checkpoint();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let wide = ModelCheckpoint::<f64>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(wide.model.cast::<f32>(), ck.model);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ck = checkpoint();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            ModelCheckpoint::<f32>::read_from(&mut bad.as_slice()),
            Err(EncoderError::Format(FormatError::BadMagic { .. }))
        ));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            ModelCheckpoint::<f32>::read_from(&mut bad.as_slice()),
            Err(EncoderError::Format(FormatError::UnsupportedVersion { found: 9, .. }))
        ));
        let short = &buf[..buf.len() - 10];
        assert!(ModelCheckpoint::<f32>::read_from(&mut &short[..]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(ModelCheckpoint::<f32>::read_from(&mut long.as_slice()).is_err());
    }
}
