//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "TOPRSTCK"
//! version    u32      currently 1
//! scalar     u8       bytes per value (4 = f32, 8 = f64)
//! header_len u64
//! header     header_len bytes of UTF-8 JSON (model and training config)
//! count      u32      number of tensors
//! count times:
//!   name_len u32, name (UTF-8)
//!   ndim     u32, dims (u64 each)
//!   data     product(dims) values, `scalar` bytes each
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"TOPRSTCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub header: Value,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_store(header: Value, store: &ParamStore<T>) -> Self {
        Checkpoint {
            header,
            tensors: store.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    /// Copies tensor values into `store`. Names and shapes must match the
    /// store's parameters one to one.
    pub fn load_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, model has {} parameters",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, t) in &self.tensors {
            let id = store
                .id(name)
                .ok_or_else(|| Error::Format(format!("checkpoint tensor `{name}` is not a model parameter")))?;
            let p = store.get_mut(id);
            if p.value.shape() != t.shape() {
                return Err(Error::Format(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(T::BYTES as u8);
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Format(e.to_string()))?;
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut buf);
            }
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let width = cur.take(1)?[0] as usize;
        if width != T::BYTES {
            return Err(Error::Format(format!(
                "checkpoint stores {width}-byte values, reader expects {}",
                T::NAME
            )));
        }
        let header_len = cur.u64()? as usize;
        let header = serde_json::from_slice(cur.take(header_len)?).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let count = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let ndim = cur.u32()? as usize;
            let shape = (0..ndim).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = cur.take(n * T::BYTES)?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last tensor".into()));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Bytes per stored value, read from the file prefix without loading tensors.
pub fn scalar_width(path: impl AsRef<Path>) -> Result<usize> {
    let mut prefix = [0u8; 13];
    File::open(path)?
        .read_exact(&mut prefix)
        .map_err(|_| Error::Format("not a checkpoint file".into()))?;
    if &prefix[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    Ok(prefix[12] as usize)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn store<T: Scalar>() -> ParamStore<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        s.add_glorot("a.w", 3, 5, &mut rng).unwrap();
        s.add_zeros("a.b", &[5]).unwrap();
        s.add("odd", Tensor::vector(vec![T::lit(1e-30), T::lit(-0.0), T::lit(3.25)])).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bitwise() {
        let s = store::<f64>();
        let ck = Checkpoint::from_store(json!({"word_dim": 8}), &s);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::<f64>::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.header, json!({"word_dim": 8}));
        for ((n1, t1), (n2, t2)) in ck.tensors.iter().zip(&back.tensors) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
        let mut other = ParamStore::<f64>::new();
        other.add_zeros("a.w", &[3, 5]).unwrap();
        other.add_zeros("a.b", &[5]).unwrap();
        other.add_zeros("odd", &[3]).unwrap();
        back.load_into(&mut other).unwrap();
        assert_eq!(other.value(other.id("a.w").unwrap()), s.value(s.id("a.w").unwrap()));
    }

    #[test]
    fn f32_round_trip_and_width_check() {
        let s = store::<f32>();
        let ck = Checkpoint::from_store(Value::Null, &s);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert_eq!(Checkpoint::<f32>::read_from(bytes.as_slice()).unwrap(), ck);
        assert!(matches!(Checkpoint::<f64>::read_from(bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let ck = Checkpoint::from_store(Value::Null, &store::<f64>());
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert!(Checkpoint::<f64>::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f64>::read_from(bad.as_slice()).is_err());
        let mut shape_mismatch = ParamStore::<f64>::new();
        shape_mismatch.add_zeros("a.w", &[5, 3]).unwrap();
        shape_mismatch.add_zeros("a.b", &[5]).unwrap();
        shape_mismatch.add_zeros("odd", &[3]).unwrap();
        assert!(ck.load_into(&mut shape_mismatch).is_err());
    }

    #[test]
    fn width_is_readable_from_the_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        Checkpoint::from_store(Value::Null, &store::<f32>()).save(&a).unwrap();
        Checkpoint::from_store(Value::Null, &store::<f64>()).save(&b).unwrap();
        assert_eq!(scalar_width(&a).unwrap(), 4);
        assert_eq!(scalar_width(&b).unwrap(), 8);
        std::fs::write(&a, b"short").unwrap();
        assert!(scalar_width(&a).is_err());
    }
}
