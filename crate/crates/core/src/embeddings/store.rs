use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMBS";
const VERSION: u8 = 1;

/// Row-major `f32` matrix keyed by text, one row per key.
///
/// On disk: `"EMBS"`, version byte `1`, then little-endian `u32 dim`,
/// `u32 count`, `count` × (`u16` key length + UTF-8 key), then
/// `count * dim` `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    matrix: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ids: Vec::new(),
            matrix: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_rows(dim: usize, ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        let mut store = EmbeddingStore::new(dim);
        for (id, row) in ids.into_iter().zip(rows) {
            store.insert(id, &row)?;
        }
        Ok(store)
    }

    /// Appends a row. Keys must be unique and at most `u16::MAX` bytes.
    pub fn insert(&mut self, key: String, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Shape(format!(
                "row for `{key}` has dim {}, store dim is {}",
                row.len(),
                self.dim
            )));
        }
        if key.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("key of {} bytes is too long", key.len())));
        }
        if self.index.contains_key(&key) {
            return Err(Error::InvalidArgument(format!("duplicate key `{key}`")));
        }
        self.index.insert(key.clone(), self.ids.len());
        self.ids.push(key);
        self.matrix.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index.get(key).map(|&i| self.row(i))
    }

    pub fn require(&self, key: &str) -> Result<&[f32]> {
        self.get(key).ok_or_else(|| Error::MissingEmbedding(key.to_owned()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let keys: usize = self.ids.iter().map(|k| 2 + k.len()).sum();
        let mut out = Vec::with_capacity(13 + keys + 4 * self.matrix.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        for k in &self.ids {
            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
        }
        for x in &self.matrix {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not an embedding store".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::Format(format!("unsupported store version {version}")));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let key = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("key is not valid UTF-8".into()))?;
            ids.push(key.to_owned());
        }
        let floats = count
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        let raw = r.take(floats * 4)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let matrix = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut index = HashMap::with_capacity(count);
        for (i, k) in ids.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate key `{k}`")));
            }
        }
        Ok(EmbeddingStore {
            dim,
            ids,
            matrix,
            index,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file: wanted {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
