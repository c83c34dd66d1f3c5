use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::stft::Framer;
use super::{AudioBuffer, DspError, SpectralConfig};
use crate::binio::{self, FormatError};

const MEL_MAGIC: &[u8; 4] = b"CFMS";
pub const MEL_VERSION: u32 = 1;

/// HTK mel scale: `m = 2595 · log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters, `[n_mels × n_bins]` row-major, unit peak height.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    pub weights: Vec<f64>,
    pub center_hz: Vec<f64>,
    /// Non-zero bin range of each filter.
    support: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// `out[m] = Σ_k weights[m][k] · spectrum[k]`.
    pub fn apply(&self, spectrum: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            let (lo, hi) = self.support[m];
            let row = self.row(m);
            *o = (lo..hi).map(|k| row[k] * spectrum[k]).sum();
        }
    }
}

pub fn mel_filterbank(cfg: &SpectralConfig) -> Result<MelFilterbank, DspError> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let n_mels = cfg.n_mels;
    let (mlo, mhi) = (hz_to_mel(cfg.mel_fmin), hz_to_mel(cfg.mel_fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.fft_len as f64;
    let mut weights = vec![0.0; n_mels * n_bins];
    let mut support = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        let (mut lo, mut hi) = (usize::MAX, 0);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let v = ((f - left) / (center - left)).min((right - f) / (right - center));
            if v > 0.0 {
                *w = v;
                lo = lo.min(k);
                hi = k + 1;
            }
        }
        if hi == 0 {
            return Err(DspError::EmptyFilter { index: m });
        }
        support.push((lo, hi));
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        center_hz: edges[1..=n_mels].to_vec(),
        support,
    })
}

/// Stabilized log-mel spectrogram of one segment, `[n_frames × n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    n_frames: usize,
    n_mels: usize,
    values: Vec<f32>,
    config: SpectralConfig,
}

impl MelSpectrogram {
    pub fn new(
        n_frames: usize,
        n_mels: usize,
        values: Vec<f32>,
        config: SpectralConfig,
    ) -> Result<Self, DspError> {
        if values.len() != n_frames * n_mels {
            return Err(DspError::InvalidArgument(format!(
                "{} values for a {n_frames}×{n_mels} spectrogram",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DspError::InvalidArgument(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            n_frames,
            n_mels,
            values,
            config,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.config
    }

    pub fn get(&self, frame: usize, mel: usize) -> f32 {
        self.values[frame * self.n_mels + mel]
    }

    pub fn mean(&self) -> f32 {
        (self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64) as f32
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FormatError> {
        binio::write_magic(w, MEL_MAGIC, MEL_VERSION)?;
        write_spectral_config(w, &self.config)?;
        w.write_u32::<LittleEndian>(self.n_frames as u32)?;
        w.write_u32::<LittleEndian>(self.n_mels as u32)?;
        binio::write_f32s(w, &self.values)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, FormatError> {
        binio::read_magic(r, MEL_MAGIC, "mel spectrogram", MEL_VERSION)?;
        let config = read_spectral_config(r)?;
        let n_frames = r.read_u32::<LittleEndian>()? as usize;
        let n_mels = r.read_u32::<LittleEndian>()? as usize;
        if n_mels != config.n_mels || n_frames.saturating_mul(n_mels) > 1 << 28 {
            return Err(FormatError::Malformed(format!(
                "dimensions {n_frames}×{n_mels} inconsistent with config"
            )));
        }
        let values = binio::read_f32s(r, n_frames * n_mels)?;
        binio::expect_eof(r)?;
        Self::new(n_frames, n_mels, values, config).map_err(|e| FormatError::Malformed(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DspError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DspError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(FormatError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DspError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DspError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::read_from(&mut BufReader::new(file))?)
    }
}

pub(crate) fn write_spectral_config<W: Write>(w: &mut W, c: &SpectralConfig) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(c.sample_rate)?;
    w.write_f64::<LittleEndian>(c.segment_seconds)?;
    w.write_u32::<LittleEndian>(c.fft_len as u32)?;
    w.write_u32::<LittleEndian>(c.hop_len as u32)?;
    w.write_u32::<LittleEndian>(c.n_mels as u32)?;
    w.write_f64::<LittleEndian>(c.mel_fmin)?;
    w.write_f64::<LittleEndian>(c.mel_fmax)?;
    w.write_f64::<LittleEndian>(c.log_epsilon)
}

pub(crate) fn read_spectral_config<R: Read>(r: &mut R) -> Result<SpectralConfig, FormatError> {
    let c = SpectralConfig {
        sample_rate: r.read_u32::<LittleEndian>()?,
        segment_seconds: r.read_f64::<LittleEndian>()?,
        fft_len: r.read_u32::<LittleEndian>()? as usize,
        hop_len: r.read_u32::<LittleEndian>()? as usize,
        n_mels: r.read_u32::<LittleEndian>()? as usize,
        mel_fmin: r.read_f64::<LittleEndian>()?,
        mel_fmax: r.read_f64::<LittleEndian>()?,
        log_epsilon: r.read_f64::<LittleEndian>()?,
    };
    c.validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(c)
}

/// Precomputed window, FFT plan and filterbank for one `SpectralConfig`.
#[derive(Clone)]
pub struct Featurizer {
    cfg: SpectralConfig,
    framer: Framer,
    bank: MelFilterbank,
}

impl std::fmt::Debug for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Featurizer").field("cfg", &self.cfg).finish()
    }
}

impl Featurizer {
    pub fn new(cfg: SpectralConfig) -> Result<Self, DspError> {
        let bank = mel_filterbank(&cfg)?;
        Ok(Self {
            framer: Framer::new(cfg.fft_len, cfg.hop_len),
            cfg,
            bank,
        })
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    fn check_segment(&self, buf: &AudioBuffer) -> Result<(), DspError> {
        if buf.sample_rate() != self.cfg.sample_rate {
            return Err(DspError::SampleRateMismatch {
                expected: self.cfg.sample_rate,
                found: buf.sample_rate(),
            });
        }
        if buf.len() != self.cfg.segment_samples() {
            return Err(DspError::WrongLength {
                expected: self.cfg.segment_samples(),
                found: buf.len(),
            });
        }
        Ok(())
    }

    /// Mel-filtered power `[n_frames × n_mels]` before the log.
    pub fn mel_power(&self, buf: &AudioBuffer) -> Result<Vec<f64>, DspError> {
        self.check_segment(buf)?;
        let n_mels = self.cfg.n_mels;
        let mut out = vec![0.0; self.cfg.n_frames() * n_mels];
        let mut power = vec![0.0; self.cfg.n_bins()];
        self.framer.for_each_frame(buf.samples(), |f, spec| {
            for (p, c) in power.iter_mut().zip(spec) {
                *p = c.norm_sqr();
            }
            self.bank.apply(&power, &mut out[f * n_mels..(f + 1) * n_mels]);
        });
        Ok(out)
    }

    pub fn log_mel(&self, buf: &AudioBuffer) -> Result<MelSpectrogram, DspError> {
        let eps = self.cfg.log_epsilon;
        let values = self
            .mel_power(buf)?
            .into_iter()
            .map(|p| (p + eps).ln() as f32)
            .collect();
        Ok(MelSpectrogram {
            n_frames: self.cfg.n_frames(),
            n_mels: self.cfg.n_mels,
            values,
            config: self.cfg,
        })
    }
}

/// `log(mel_filterbank · |stft|² + ε)` for one segment.
pub fn log_mel(buf: &AudioBuffer, cfg: &SpectralConfig) -> Result<MelSpectrogram, DspError> {
    Featurizer::new(*cfg)?.log_mel(buf)
}
