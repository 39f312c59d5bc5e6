//! Little-endian binary helpers shared by the dump and checkpoint formats.

use std::io::{self, Read, Write};

use crate::error::{Result, ScopeError};

/// Reader that tracks its byte offset so truncation errors can say where.
pub(crate) struct LeReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> LeReader<R> {
    pub fn new(inner: R) -> Self {
        LeReader { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf, what)?;
        Ok(buf)
    }

    pub fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let mut read = 0;
        while read < buf.len() {
            match self.inner.read(&mut buf[read..]) {
                Ok(0) => {
                    return Err(ScopeError::Corruption {
                        offset: self.offset + read as u64,
                        reason: format!("unexpected end of file while reading {what}"),
                    })
                }
                Ok(n) => read += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(what)?))
    }

    /// Reads `len` binary32 values, rejecting non-finite ones.
    pub fn f32_array(&mut self, len: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.offset;
        let mut raw = vec![0u8; len * 4];
        self.fill(&mut raw, what)?;
        let mut out = Vec::with_capacity(len);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(ScopeError::Corruption {
                    offset: start + 4 * i as u64,
                    reason: format!("non-finite value in {what}"),
                });
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Errors unless the stream is exhausted.
    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => {
                    return Err(ScopeError::Corruption {
                        offset: self.offset,
                        reason: "trailing bytes after end of data".into(),
                    })
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

pub(crate) fn check_magic<R: Read>(r: &mut LeReader<R>, magic: &[u8; 4]) -> Result<()> {
    let found: [u8; 4] = r.bytes("magic").map_err(|_| {
        ScopeError::Format(format!(
            "file too short to hold magic {}",
            String::from_utf8_lossy(magic)
        ))
    })?;
    if &found != magic {
        return Err(ScopeError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub(crate) fn check_version<R: Read>(r: &mut LeReader<R>, supported: u32) -> Result<()> {
    let version = r.u32("version")?;
    if version != supported {
        return Err(ScopeError::Format(format!(
            "unsupported version {version} (this build reads version {supported})"
        )));
    }
    Ok(())
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f32>) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_f64s_as_f32<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    write_f32s(w, values.iter().map(|&v| v as f32))
}
