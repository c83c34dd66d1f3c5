//! Little-endian helpers shared by the binary containers (mel spectrograms,
//! checkpoints, fingerprint databases).

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported {what} version {found} (supported: {supported})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("truncated or unreadable file: {0}")]
    Truncated(#[source] io::Error),
    #[error("malformed content: {0}")]
    Malformed(String),
}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        FormatError::Truncated(e)
    }
}

pub(crate) fn write_magic<W: Write>(w: &mut W, magic: &[u8; 4], version: u32) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(version)
}

pub(crate) fn read_magic<R: Read>(
    r: &mut R,
    magic: &[u8; 4],
    what: &'static str,
    supported: u32,
) -> Result<u32, FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::BadMagic {
            expected: *magic,
            found,
        });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != supported {
        return Err(FormatError::UnsupportedVersion {
            what,
            found: version,
            supported,
        });
    }
    Ok(version)
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String, FormatError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 20 {
        return Err(FormatError::Malformed(format!("string length {len} too large")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| FormatError::Malformed(e.to_string()))
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> io::Result<()> {
    for &x in xs {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, FormatError> {
    let mut out = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> io::Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, FormatError> {
    let mut out = vec![0f64; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

/// Fails if the reader still has bytes left.
pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<(), FormatError> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(FormatError::Malformed("trailing bytes after payload".into())),
    }
}
