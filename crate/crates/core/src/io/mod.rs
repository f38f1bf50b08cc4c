//! External interfaces: the binary epoch container, the checkpoint format,
//! the flat key=value run configuration, and report emission.

pub mod checkpoint;
pub mod config;
pub mod epoch_file;
pub mod reports;

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use config::RunConfig;
pub use epoch_file::{read_epoch, read_epoch_csv, write_epoch, ManifestEntry};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch for tensor {name}: file has {file:?}, expected {expected:?}")]
    TensorShape { name: String, file: Vec<usize>, expected: Vec<usize> },
    #[error("{0}")]
    Invalid(String),
}

/// Write via a temporary file in the same directory plus an atomic rename,
/// so failed writes never leave partial artifacts behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

// ── Little-endian primitives ────────────────────────────────────────────────

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.bytes.len() {
            return Err(IoError::Corrupt(format!(
                "file truncated while reading {what} (need {n} bytes at offset {})",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8, IoError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16, IoError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, IoError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn i8(&mut self, what: &str) -> Result<i8, IoError> {
        Ok(self.take(1, what)?[0] as i8)
    }

    pub fn f32(&mut self, what: &str) -> Result<f32, IoError> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_creates_parents_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/dir/file.bin");
        atomic_write(&path, b"first").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"first");
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No stray temp file remains.
        let entries: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn reader_reports_truncation() {
        let mut r = Reader::new(&[1, 2]);
        assert!(r.u32("field").is_err());
    }
}
