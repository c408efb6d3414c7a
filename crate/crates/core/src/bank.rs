//! `EMB1` embedding bank: named fixed-dimension float32 vectors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EMB1" | section: u8 (0 = prompts, 1 = frames) | dim: u32 | count: u32
//! count × ( name_len: u16 | name: UTF-8 | dim × f32 )
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Prompts = 0,
    Frames = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBank {
    section: Section,
    dim: usize,
    names: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

/// Key under which a video frame's embedding is stored.
pub fn frame_key(video_id: &str, frame_index: usize) -> String {
    format!("{video_id}#{frame_index}")
}

impl EmbeddingBank {
    pub fn new(section: Section, dim: usize) -> Self {
        EmbeddingBank {
            section,
            dim,
            names: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let name = name.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Bank(format!("entry `{name}` has non-finite values")));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::Bank(format!("entry name of {} bytes is too long", name.len())));
        }
        if self.index.contains_key(&name) {
            return Err(Error::Bank(format!("duplicate entry `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn section(&self) -> Section {
        self.section
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f32]> {
        self.index.get(name).map(|&i| self.vectors[i].as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f32]> {
        self.get(name).ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.names.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.len() * (2 + 16 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.push(self.section as u8);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (name, v) in self.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Bank("bad magic, expected EMB1".into()));
        }
        let section = match r.take(1, "section tag")?[0] {
            0 => Section::Prompts,
            1 => Section::Frames,
            t => return Err(Error::Bank(format!("unknown section tag {t}"))),
        };
        let dim = r.u32("dim")? as usize;
        let count = r.u32("count")? as usize;
        if dim == 0 {
            return Err(Error::Bank("dim must be positive".into()));
        }
        let mut bank = EmbeddingBank::new(section, dim);
        for i in 0..count {
            let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Bank(format!("entry {i}: name is not UTF-8")))?
                .to_string();
            let raw = r.take(4 * dim, "vector")?;
            let v = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            bank.insert(name, v)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Bank(format!(
                "{} trailing bytes after {count} entries",
                bytes.len() - r.pos
            )));
        }
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Bank(m) => Error::Bank(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Bank(format!("truncated while reading {what} at byte {}", self.pos))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
