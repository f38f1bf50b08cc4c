//! Checkpoint container for named tensors.
//!
//! Binary layout (little-endian): magic "EEGF", version u32=1, tensor count
//! u32, per tensor { name_len u16, UTF-8 name, rank u8, dims u32 each, f32
//! values row-major }, then a length-prefixed (u32) UTF-8 config echo.

use std::collections::HashSet;
use std::path::Path;

use crate::tensor::Param;

use super::{atomic_write, IoError, Reader};

const MAGIC: &[u8; 4] = b"EEGF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub config_echo: String,
}

impl Checkpoint {
    /// Snapshot a parameter list; values are narrowed to f32.
    pub fn from_named_params(named: &[(String, Param)], config_echo: String) -> Self {
        let tensors = named
            .iter()
            .map(|(name, p)| {
                let t = p.tensor();
                NamedTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    values: t.data().iter().map(|&v| v as f32).collect(),
                }
            })
            .collect();
        Self { tensors, config_echo }
    }

    /// Copy stored values into a parameter list, matching by name. A missing
    /// tensor or a shape mismatch (for example a different channel count in
    /// the projection) is an error naming the offending tensor.
    pub fn apply_to(&self, named: &[(String, Param)]) -> Result<(), IoError> {
        for (name, param) in named {
            let tensor = self
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| IoError::Format(format!("checkpoint lacks tensor {name:?}")))?;
            let expected = param.tensor().shape().to_vec();
            if tensor.shape != expected {
                return Err(IoError::TensorShape {
                    name: name.clone(),
                    file: tensor.shape.clone(),
                    expected,
                });
            }
            param.set_value(tensor.values.iter().map(|&v| v as f64).collect());
        }
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let echo = self.config_echo.as_bytes();
        out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        out.extend_from_slice(echo);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(IoError::Format(format!("bad magic {magic:?}, expected \"EEGF\"")));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(IoError::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count);
        let mut names = HashSet::new();
        for i in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| IoError::Corrupt(format!("tensor {i} name is not UTF-8")))?
                .to_string();
            if !names.insert(name.clone()) {
                return Err(IoError::Corrupt(format!("duplicate tensor name {name:?}")));
            }
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut values = Vec::with_capacity(numel);
            for _ in 0..numel {
                values.push(r.f32("tensor value")?);
            }
            tensors.push(NamedTensor { name, shape, values });
        }
        let echo_len = r.u32("config echo length")? as usize;
        let config_echo = std::str::from_utf8(r.take(echo_len, "config echo")?)
            .map_err(|_| IoError::Corrupt("config echo is not UTF-8".into()))?
            .to_string();
        if !r.is_empty() {
            return Err(IoError::Corrupt("trailing bytes after config echo".into()));
        }
        Ok(Self { tensors, config_echo })
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
