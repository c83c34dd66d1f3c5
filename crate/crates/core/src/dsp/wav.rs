//! Minimal RIFF/WAVE reader and writer for 16-bit PCM. Multi-channel input is
//! downmixed to mono by averaging.

use std::fs;
use std::path::Path;

use super::{AudioBuffer, DspError};

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn wav_err(msg: impl Into<String>) -> DspError {
    DspError::Wav(msg.into())
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(wav_err("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(wav_err("fmt chunk too short"));
                }
                let mut format = u16_at(body, 0);
                let channels = u16_at(body, 2);
                let rate = u32_at(body, 4);
                let bits = u16_at(body, 14);
                if format == FORMAT_EXTENSIBLE && body.len() >= 26 {
                    format = u16_at(body, 24);
                }
                if format != FORMAT_PCM {
                    return Err(wav_err(format!("unsupported format tag {format:#06x} (PCM only)")));
                }
                if bits != 16 {
                    return Err(wav_err(format!("unsupported bit depth {bits} (16-bit only)")));
                }
                if channels == 0 {
                    return Err(wav_err("zero channels"));
                }
                fmt = Some((channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_start + size + (size & 1);
    }
    let (channels, rate, _) = fmt.ok_or_else(|| wav_err("missing fmt chunk"))?;
    let data = data.ok_or_else(|| wav_err("missing data chunk"))?;
    let channels = usize::from(channels);
    let frame_bytes = 2 * channels;
    let frames = data.len() / frame_bytes;
    let samples = (0..frames)
        .map(|f| {
            let sum: f32 = (0..channels)
                .map(|c| {
                    let at = f * frame_bytes + 2 * c;
                    f32::from(i16::from_le_bytes([data[at], data[at + 1]])) / 32768.0
                })
                .sum();
            sum / channels as f32
        })
        .collect();
    AudioBuffer::new(samples, rate)
}

pub fn encode(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = buf.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate().to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in buf.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<AudioBuffer, DspError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DspError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes).map_err(|e| match e {
        DspError::Wav(m) => DspError::Wav(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<(), DspError> {
    let path = path.as_ref();
    fs::write(path, encode(buf)).map_err(|source| DspError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stereo_wav(frames: &[(i16, i16)], rate: u32) -> Vec<u8> {
        let data_len = frames.len() * 4;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 4).to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data_len as u32).to_le_bytes());
        for (l, r) in frames {
            out.extend_from_slice(&l.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    #[test]
    fn mono_round_trip_is_exact_on_the_pcm_grid() {
        let samples: Vec<f32> = (-20..20).map(|i| i as f32 * 1024.0 / 32768.0).collect();
        let buf = AudioBuffer::new(samples, 16_000).unwrap();
        let back = decode(&encode(&buf)).unwrap();
        assert_eq!(back, buf);
    }

    #[test]
    fn stereo_is_averaged() {
        let bytes = stereo_wav(&[(16384, 0), (-16384, -16384)], 44_100);
        let buf = decode(&bytes).unwrap();
        assert_eq!(buf.sample_rate(), 44_100);
        assert_eq!(buf.samples(), &[0.25, -0.5]);
    }

    #[test]
    fn rejects_non_pcm16() {
        let mut bytes = stereo_wav(&[(0, 0)], 8_000);
        bytes[34] = 24; // bits per sample
        assert!(matches!(decode(&bytes), Err(DspError::Wav(_))));
        assert!(matches!(decode(b"RIFX0000WAVE"), Err(DspError::Wav(_))));
    }
}
