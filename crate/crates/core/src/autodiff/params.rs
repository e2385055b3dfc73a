//! Named parameter tensors and their on-disk container.
//!
//! Container layout (little-endian):
//!
//! ```text
//! magic    b"IRSP"
//! version  u32 = 1
//! meta     u32 byte length, then UTF-8 text (JSON by convention)
//! count    u32
//! repeated count times:
//!   name   u32 byte length, then UTF-8
//!   ndim   u32
//!   dims   ndim × u64
//!   values prod(dims) × f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IRSP";
const VERSION: u32 = 1;

/// Trainable tensors keyed by name; iteration follows insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    tensors: IndexMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::param(name, "duplicate parameter name"));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// `self += scale · other` for every tensor present in both.
    pub fn add_scaled(&mut self, other: &ParameterSet, scale: f64) {
        for (name, t) in self.tensors.iter_mut() {
            if let Some(o) = other.get(name) {
                for (a, b) in t.data_mut().iter_mut().zip(o.data()) {
                    *a += scale * b;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn write_to<W: Write>(&self, mut out: W, metadata: &str) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        write_str(&mut out, metadata)?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(&mut out, name)?;
            out.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for d in t.shape() {
                out.write_all(&(*d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Returns the parameters and the metadata text.
    pub fn read_from<R: Read>(mut input: R) -> Result<(Self, String)> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a parameter container".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let meta = read_str(&mut input)?;
        let count = read_u32(&mut input)?;
        let mut set = ParameterSet::new();
        for _ in 0..count {
            let name = read_str(&mut input)?;
            let ndim = read_u32(&mut input)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut input)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            set.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok((set, meta))
    }

    pub fn save(&self, path: impl AsRef<Path>, metadata: &str) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w, metadata)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn write_str<W: Write>(out: &mut W, s: &str) -> Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(input: &mut R) -> Result<String> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParameterSet::new();
        p.insert("a", Tensor::scalar(1.0)).unwrap();
        assert!(p.insert("a", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn bad_magic() {
        let err = ParameterSet::read_from(&b"NOPE...."[..]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    proptest! {
        #[test]
        fn container_round_trip(values in proptest::collection::vec(-1e6..1e6f64, 1..40), meta in "[a-z{}\":,0-9 ]{0,40}") {
            let mut p = ParameterSet::new();
            p.insert("w", Tensor::new(vec![values.len()], values.clone()).unwrap()).unwrap();
            p.insert("b", Tensor::new(vec![1, 1], vec![values[0]]).unwrap()).unwrap();
            let mut buf = Vec::new();
            p.write_to(&mut buf, &meta).unwrap();
            let (q, m) = ParameterSet::read_from(&buf[..]).unwrap();
            prop_assert_eq!(q, p);
            prop_assert_eq!(m, meta);
        }
    }
}
