//! Binary checkpoint format: a versioned key -> shape -> values map with a
//! free-form metadata string. Save/load round trips are bit-exact because
//! values are written as raw little-endian f64 bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ECGVCKP\x01";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata, conventionally `key = value` lines.
    pub meta: String,
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn entry(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        let meta = self.meta.as_bytes();
        w.write_all(&(meta.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(meta).map_err(io)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())
            .map_err(io)?;
        for (name, tensor) in &self.entries {
            let nb = name.as_bytes();
            w.write_all(&(nb.len() as u16).to_le_bytes()).map_err(io)?;
            w.write_all(nb).map_err(io)?;
            w.write_all(&[tensor.shape().len() as u8]).map_err(io)?;
            for dim in tensor.shape() {
                w.write_all(&(*dim as u32).to_le_bytes()).map_err(io)?;
            }
            for v in tensor.values() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let meta_len = read_u32(&mut r, path)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes).map_err(io)?;
        let meta = String::from_utf8(meta_bytes)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".to_string()))?;
        let count = read_u32(&mut r, path)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let mut len_bytes = [0u8; 2];
            r.read_exact(&mut len_bytes).map_err(io)?;
            let mut name_bytes = vec![0u8; u16::from_le_bytes(len_bytes) as usize];
            r.read_exact(&mut name_bytes).map_err(io)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".to_string()))?;
            let mut ndim = [0u8; 1];
            r.read_exact(&mut ndim).map_err(io)?;
            let mut shape = Vec::with_capacity(ndim[0] as usize);
            for _ in 0..ndim[0] {
                shape.push(read_u32(&mut r, path)? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut values = Vec::with_capacity(numel);
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut buf).map_err(io)?;
                values.push(f64::from_le_bytes(buf));
            }
            entries.push((name, Tensor::new(shape, values)?));
        }
        Ok(Checkpoint { meta, entries })
    }
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(buf))
}
