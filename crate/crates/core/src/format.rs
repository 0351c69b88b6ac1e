//! Little-endian binary IO helpers shared by the dataset and checkpoint
//! codecs. Payloads are CRC32-checked; magic and version mismatches map to
//! distinct error kinds.

use crate::error::{FormatError, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> std::result::Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        self.take(n)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Wraps a payload as magic + version + payload + CRC32 and writes it.
pub(crate) fn write_file(path: &std::path::Path, magic: &[u8; 4], version: u16, payload: &[u8]) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(magic);
    w.u16(version);
    w.u64(payload.len() as u64);
    w.bytes(payload);
    w.u32(crc32fast::hash(payload));
    std::fs::write(path, w.into_bytes())?;
    Ok(())
}

/// Reads a file written by `write_file`, verifying magic, version, length, and
/// checksum, and returns the payload.
pub(crate) fn read_file(path: &std::path::Path, magic: &[u8; 4], version: u16) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes);
    if r.bytes(4).map_err(|_| FormatError::Truncated)? != magic {
        return Err(FormatError::BadMagic.into());
    }
    let v = r.u16()?;
    if v != version {
        return Err(FormatError::BadVersion(v).into());
    }
    let len = r.u64()? as usize;
    let payload = r.bytes(len)?.to_vec();
    let crc = r.u32()?;
    if crc != crc32fast::hash(&payload) {
        return Err(FormatError::ChecksumMismatch.into());
    }
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn round_trip_and_error_kinds() {
        let dir = std::env::temp_dir().join("idsprites-format-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("blob.bin");
        write_file(&path, b"TEST", 1, b"payload bytes").unwrap();
        assert_eq!(read_file(&path, b"TEST", 1).unwrap(), b"payload bytes");

        // Wrong magic.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_file(&path, b"TEST", 1),
            Err(Error::Format(FormatError::BadMagic))
        ));
        bytes[0] ^= 0xFF;

        // Corrupted payload.
        let n = bytes.len();
        bytes[n - 8] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_file(&path, b"TEST", 1),
            Err(Error::Format(FormatError::ChecksumMismatch))
        ));
        bytes[n - 8] ^= 0x01;

        // Truncation.
        std::fs::write(&path, &bytes[..n - 2]).unwrap();
        assert!(matches!(
            read_file(&path, b"TEST", 1),
            Err(Error::Format(FormatError::Truncated))
        ));

        // Version mismatch.
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_file(&path, b"TEST", 2),
            Err(Error::Format(FormatError::BadVersion(1)))
        ));
    }
}
