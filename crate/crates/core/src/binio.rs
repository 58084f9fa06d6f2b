//! Little-endian binary encoding shared by the dataset and model files.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) struct Sink<W: Write> {
    pub inner: W,
    pub crc: Option<crc32fast::Hasher>,
}

impl<W: Write> Sink<W> {
    pub fn new(inner: W) -> Self {
        Sink { inner, crc: None }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        if let Some(c) = &mut self.crc {
            c.update(b);
        }
        self.inner.write_all(b)?;
        Ok(())
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    pub fn u16(&mut self, v: u16) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f32s(&mut self, v: &[f32]) -> Result<()> {
        let mut buf = Vec::with_capacity(4 * 4096);
        for chunk in v.chunks(4096) {
            buf.clear();
            for x in chunk {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            self.bytes(&buf)?;
        }
        Ok(())
    }

    pub fn f64s(&mut self, v: &[f64]) -> Result<()> {
        for &x in v {
            self.f64(x)?;
        }
        Ok(())
    }
}

pub(crate) struct Source<R: Read> {
    pub inner: R,
    pub crc: Option<crc32fast::Hasher>,
}

impl<R: Read> Source<R> {
    pub fn new(inner: R) -> Self {
        Source { inner, crc: None }
    }

    pub fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
            _ => Error::Io(e),
        })?;
        if let Some(c) = &mut self.crc {
            c.update(buf);
        }
        Ok(())
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b)?;
        Ok(b)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 4 * 4096];
        let mut left = n;
        while left > 0 {
            let k = left.min(4096);
            self.fill(&mut buf[..4 * k])?;
            out.extend(buf[..4 * k].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
            left -= k;
        }
        Ok(out)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    /// Fail unless the stream is exhausted.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after the checksum".into())),
        }
    }
}

pub(crate) fn check_magic_version<R: Read>(src: &mut Source<R>, magic: &[u8], supported: u16) -> Result<u16> {
    let mut m = vec![0u8; magic.len()];
    src.fill(&mut m)?;
    if m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = src.u16()?;
    if version > supported {
        return Err(Error::Format(format!(
            "file version {version} is newer than the supported version {supported}"
        )));
    }
    if version == 0 {
        return Err(Error::Format("file version 0 is invalid".into()));
    }
    Ok(version)
}

/// Writer that only feeds a SHA-256 digest.
#[derive(Default)]
pub(crate) struct HashWriter(Sha256);

impl HashWriter {
    pub fn hex(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
