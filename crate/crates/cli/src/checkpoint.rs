//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//! `"PDNMT1"`, `u32` version, 32-byte config digest, `u32` count, then per
//! parameter: `u32` name length, UTF-8 name, `u8` partition code, `u32` rows,
//! `u32` cols, `rows * cols` `f32` values.

use std::path::Path;

use dpnmt::autodiff::{ParameterStore, Partition, Tensor};
use dpnmt::util::write_atomic;
use dpnmt::{Error, Result};

pub const MAGIC: &[u8; 6] = b"PDNMT1";
pub const VERSION: u32 = 1;

pub fn encode(store: &ParameterStore, digest: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * store.num_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(p.partition.code());
        let [rows, cols] = p.value.shape();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for &x in p.value.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parses a checkpoint, requiring its digest to equal `expected`.
pub fn decode(bytes: &[u8], expected: &[u8; 32]) -> Result<ParameterStore> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if r.take(32)? != expected {
        return Err(Error::Checkpoint(
            "model configuration digest mismatch; the checkpoint was trained with a different architecture".into(),
        ));
    }
    let count = r.u32()?;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let code = r.take(1)?[0];
        let partition =
            Partition::from_code(code).ok_or_else(|| Error::Checkpoint(format!("{name}: bad partition code {code}")))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        store.insert(name, partition, Tensor::new(rows, cols, data)?)?;
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(store)
}

pub fn save(path: &Path, store: &ParameterStore, digest: &[u8; 32]) -> Result<()> {
    write_atomic(path, &encode(store, digest))
}

pub fn load(path: &Path, expected: &[u8; 32]) -> Result<ParameterStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expected).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
