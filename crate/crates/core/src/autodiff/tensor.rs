//! Dense parameter tensors, the named parameter store and its checkpoint
//! container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic    b"RBPS"
//! version  u32
//! hlen     u32            length of the JSON header in bytes
//! header   hlen bytes     {"version":1,"dtype":"f64","params":[{"name":..,"shape":[..]},..]}
//! payload  f64 values of each parameter, in header order, row-major
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RBPS";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `r` of a 2-d tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }
}

/// Named trainable parameters, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    params: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::StoreMismatch(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    /// Replaces an existing parameter's values, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if slot.shape != tensor.shape {
            return Err(Error::ShapeMismatch {
                op: "set",
                detail: format!("`{name}` has shape {:?}, got {:?}", slot.shape, tensor.shape),
            });
        }
        *slot = tensor;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Errors unless both stores have identical names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::StoreMismatch(format!(
                "{} vs {} parameters",
                self.params.len(),
                other.params.len()
            )));
        }
        for ((a, ta), (b, tb)) in self.params.iter().zip(&other.params) {
            if a != b {
                return Err(Error::StoreMismatch(format!("`{a}` vs `{b}`")));
            }
            if ta.shape != tb.shape {
                return Err(Error::StoreMismatch(format!(
                    "`{a}` shape {:?} vs {:?}",
                    ta.shape, tb.shape
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            dtype: "f64".to_string(),
            params: self
                .params
                .iter()
                .map(|(name, t)| HeaderEntry {
                    name: name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        out.write_all(MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        for t in self.params.values() {
            for v in &t.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(64 + self.num_values() * 8);
        self.write_checkpoint(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut word = [0u8; 4];
        input.read_exact(&mut word).map_err(|_| bad("truncated magic"))?;
        if &word != MAGIC {
            return Err(bad("bad magic"));
        }
        input.read_exact(&mut word).map_err(|_| bad("truncated version"))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        input.read_exact(&mut word).map_err(|_| bad("truncated header length"))?;
        let hlen = u32::from_le_bytes(word) as usize;
        let mut header = vec![0u8; hlen];
        input.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&header)?;
        if header.dtype != "f64" {
            return Err(Error::Checkpoint(format!("unsupported dtype {}", header.dtype)));
        }
        let mut store = ParamStore::new();
        let mut value = [0u8; 8];
        for entry in header.params {
            let n: usize = entry.shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                input
                    .read_exact(&mut value)
                    .map_err(|_| Error::Checkpoint(format!("truncated payload for `{}`", entry.name)))?;
                data.push(f64::from_le_bytes(value));
            }
            store.insert(entry.name, Tensor::new(entry.shape, data)?)?;
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest).map_err(|_| bad("read error"))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ParamStore::read_checkpoint(bytes.as_slice())
    }
}

/// Elementwise `theta + epsilon * (theta_pp - theta)`, evaluated as
/// `(1 - epsilon) * theta + epsilon * theta_pp` so both endpoints are exact.
pub fn interpolate_params(theta: &ParamStore, theta_pp: &ParamStore, epsilon: f64) -> Result<ParamStore> {
    theta.check_compatible(theta_pp)?;
    let mut out = theta.clone();
    for ((_, t), (_, tpp)) in out.params.iter_mut().zip(&theta_pp.params) {
        for (a, &b) in t.data.iter_mut().zip(&tpp.data) {
            *a = (1.0 - epsilon) * *a + epsilon * b;
        }
    }
    Ok(out)
}
