//! Named parameter storage and the on-disk checkpoint format.
//!
//! A checkpoint is one JSON header line
//! `{"schema_version":1,"params":[{"name":..,"shape":[..]},..]}` followed by
//! the parameter values as little-endian `f32`, concatenated in header order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameters in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn to_entries(&self) -> Vec<CheckpointEntry> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, t)| CheckpointEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect()
    }

    /// Overwrites every parameter from checkpoint entries. Names, order and
    /// shapes must match exactly.
    pub fn load_entries(&mut self, entries: &[CheckpointEntry]) -> Result<()> {
        if entries.len() != self.values.len() {
            return Err(TensorError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.values.len(),
                entries.len()
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.name != self.names[i] || e.shape != self.values[i].shape() {
                return Err(TensorError::Checkpoint(format!(
                    "parameter {i}: expected {} {:?}, found {} {:?}",
                    self.names[i],
                    self.values[i].shape(),
                    e.name,
                    e.shape
                )));
            }
            let data = e.values.iter().map(|&v| T::from_f64(v as f64)).collect();
            self.values[i] = Tensor::new(&e.shape, data)?;
        }
        Ok(())
    }
}

/// One parameter as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u64,
    params: Vec<HeaderParam>,
}

#[derive(Serialize, Deserialize)]
struct HeaderParam {
    name: String,
    shape: Vec<usize>,
}

pub fn write_checkpoint_to(mut w: impl Write, entries: &[CheckpointEntry]) -> Result<()> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        params: entries
            .iter()
            .map(|e| HeaderParam {
                name: e.name.clone(),
                shape: e.shape.clone(),
            })
            .collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for e in entries {
        for v in &e.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint_from(r: impl Read) -> Result<Vec<CheckpointEntry>> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(TensorError::SchemaVersion(header.schema_version));
    }
    let mut entries = Vec::with_capacity(header.params.len());
    let mut buf = [0u8; 4];
    for p in header.params {
        let count: usize = p.shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| TensorError::Checkpoint(format!("truncated data for {}", p.name)))?;
            values.push(f32::from_le_bytes(buf));
        }
        entries.push(CheckpointEntry {
            name: p.name,
            shape: p.shape,
            values,
        });
    }
    if r.read(&mut buf)? != 0 {
        return Err(TensorError::Checkpoint("trailing bytes after parameter data".into()));
    }
    Ok(entries)
}

pub fn write_checkpoint<T: Scalar>(path: impl AsRef<Path>, store: &ParamStore<T>) -> Result<()> {
    write_checkpoint_to(BufWriter::new(File::create(path)?), &store.to_entries())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<CheckpointEntry>> {
    read_checkpoint_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.register("enc.w", Tensor::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap());
        s.register("enc.b", Tensor::from_f64(&[3], &[-0.5, 0.25, 1e-3]).unwrap());
        s
    }

    #[test]
    fn layout_is_header_line_then_le_f32() {
        let mut bytes = Vec::new();
        write_checkpoint_to(&mut bytes, &store().to_entries()).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["schema_version"], 1);
        assert_eq!(header["params"][0]["name"], "enc.w");
        assert_eq!(header["params"][1]["shape"], serde_json::json!([3]));
        let body = &bytes[nl + 1..];
        assert_eq!(body.len(), 9 * 4);
        assert_eq!(&body[..4], &1.0f32.to_le_bytes());
        assert_eq!(&body[24..28], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn round_trip_and_load() {
        let mut bytes = Vec::new();
        write_checkpoint_to(&mut bytes, &store().to_entries()).unwrap();
        let entries = read_checkpoint_from(bytes.as_slice()).unwrap();
        let mut other: ParamStore<f64> = store().cast();
        other.get_mut(ParamId(0)).data_mut()[0] = 99.0;
        other.load_entries(&entries).unwrap();
        assert_eq!(other.get(ParamId(0)).data()[0], 1.0);
    }

    #[test]
    fn rejects_bad_schema_and_mismatch() {
        let bad = b"{\"schema_version\":7,\"params\":[]}\n";
        assert!(matches!(
            read_checkpoint_from(&bad[..]),
            Err(TensorError::SchemaVersion(7))
        ));
        let mut s = store();
        let entries = vec![CheckpointEntry {
            name: "other".into(),
            shape: vec![1],
            values: vec![0.0],
        }];
        assert!(s.load_entries(&entries).is_err());
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut bytes = Vec::new();
        write_checkpoint_to(&mut bytes, &store().to_entries()).unwrap();
        bytes.truncate(bytes.len() - 2);
        assert!(read_checkpoint_from(bytes.as_slice()).is_err());
    }
}
