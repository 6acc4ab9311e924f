//! Versioned binary archive of named numeric blocks.
//!
//! Layout: magic, `u32` version, `u32` block count, directory entries
//! (name, dtype, shape, payload offset/length, CRC32), then little-endian payloads.
//! Blocks are kept sorted by name so archives are byte-for-byte reproducible.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"DARCYRB\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not an archive (bad magic)")]
    BadMagic,
    #[error("unsupported archive version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch in block `{0}`")]
    Checksum(String),
    #[error("archive truncated: {0}")]
    Truncated(String),
    #[error("missing block `{0}`")]
    MissingBlock(String),
    #[error("block `{name}` has wrong type or shape: {msg}")]
    Shape { name: String, msg: String },
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F64,
    U64,
    U8,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F64 => 1,
            Dtype::U64 => 2,
            Dtype::U8 => 3,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F64 | Dtype::U64 => 8,
            Dtype::U8 => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Dtype::F64),
            2 => Some(Dtype::U64),
            3 => Some(Dtype::U8),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub dtype: Dtype,
    pub shape: Vec<u64>,
    pub bytes: Vec<u8>,
}

impl Block {
    pub fn f64(shape: &[usize], data: &[f64]) -> Self {
        let mut bytes = Vec::with_capacity(8 * data.len());
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Block { dtype: Dtype::F64, shape: shape.iter().map(|&s| s as u64).collect(), bytes }
    }

    pub fn u64(shape: &[usize], data: &[u64]) -> Self {
        let mut bytes = Vec::with_capacity(8 * data.len());
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Block { dtype: Dtype::U64, shape: shape.iter().map(|&s| s as u64).collect(), bytes }
    }

    pub fn len(&self) -> usize {
        self.bytes.len() / self.dtype.size()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.shape.iter().map(|&s| s as usize).collect()
    }

    fn words(&self) -> impl Iterator<Item = [u8; 8]> + '_ {
        self.bytes.chunks_exact(8).map(|c| c.try_into().unwrap())
    }
}

/// In-memory archive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub blocks: BTreeMap<String, Block>,
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8], ArchiveError> {
    if buf.len() < *pos + n {
        return Err(ArchiveError::Truncated(what.to_string()));
    }
    let s = &buf[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn read_u32(buf: &[u8], pos: &mut usize, what: &str) -> Result<u32, ArchiveError> {
    Ok(u32::from_le_bytes(take(buf, pos, 4, what)?.try_into().unwrap()))
}

fn read_u64(buf: &[u8], pos: &mut usize, what: &str) -> Result<u64, ArchiveError> {
    Ok(u64::from_le_bytes(take(buf, pos, 8, what)?.try_into().unwrap()))
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_f64(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blocks.insert(name.to_string(), Block::f64(shape, data));
    }

    pub fn put_u64(&mut self, name: &str, shape: &[usize], data: &[u64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blocks.insert(name.to_string(), Block::u64(shape, data));
    }

    pub fn put_bytes(&mut self, name: &str, data: &[u8]) {
        self.blocks.insert(name.to_string(), Block { dtype: Dtype::U8, shape: vec![data.len() as u64], bytes: data.to_vec() });
    }

    pub fn get_bytes(&self, name: &str) -> Result<&[u8], ArchiveError> {
        let b = self.block(name)?;
        if b.dtype != Dtype::U8 {
            return Err(ArchiveError::Shape { name: name.into(), msg: "expected bytes".into() });
        }
        Ok(&b.bytes)
    }

    pub fn put_scalar(&mut self, name: &str, v: f64) {
        self.put_f64(name, &[1], &[v]);
    }

    pub fn block(&self, name: &str) -> Result<&Block, ArchiveError> {
        self.blocks.get(name).ok_or_else(|| ArchiveError::MissingBlock(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.blocks.contains_key(name)
    }

    pub fn get_f64(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>), ArchiveError> {
        let b = self.block(name)?;
        if b.dtype != Dtype::F64 {
            return Err(ArchiveError::Shape { name: name.into(), msg: "expected f64".into() });
        }
        Ok((b.shape(), b.words().map(f64::from_le_bytes).collect()))
    }

    pub fn get_u64(&self, name: &str) -> Result<(Vec<usize>, Vec<u64>), ArchiveError> {
        let b = self.block(name)?;
        if b.dtype != Dtype::U64 {
            return Err(ArchiveError::Shape { name: name.into(), msg: "expected u64".into() });
        }
        Ok((b.shape(), b.words().map(u64::from_le_bytes).collect()))
    }

    pub fn get_scalar(&self, name: &str) -> Result<f64, ArchiveError> {
        let (_, v) = self.get_f64(name)?;
        v.first().copied().ok_or_else(|| ArchiveError::Shape { name: name.into(), msg: "empty scalar".into() })
    }

    /// Reads an f64 block and checks its shape.
    pub fn get_f64_shaped(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>, ArchiveError> {
        let (s, v) = self.get_f64(name)?;
        if s != shape {
            return Err(ArchiveError::Shape { name: name.into(), msg: format!("shape {s:?}, expected {shape:?}") });
        }
        Ok(v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut dir = Vec::new();
        let mut payload = Vec::new();
        for (name, b) in &self.blocks {
            let nb = name.as_bytes();
            dir.extend_from_slice(&(nb.len() as u32).to_le_bytes());
            dir.extend_from_slice(nb);
            dir.push(b.dtype.code());
            dir.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for s in &b.shape {
                dir.extend_from_slice(&s.to_le_bytes());
            }
            dir.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            dir.extend_from_slice(&(b.bytes.len() as u64).to_le_bytes());
            dir.extend_from_slice(&crc32fast::hash(&b.bytes).to_le_bytes());
            payload.extend_from_slice(&b.bytes);
        }
        let mut out = Vec::with_capacity(16 + dir.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        out.extend_from_slice(&dir);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ArchiveError> {
        let mut pos = 0;
        if buf.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(buf) && !buf.is_empty() {
                ArchiveError::Truncated("header".into())
            } else {
                ArchiveError::BadMagic
            });
        }
        if take(buf, &mut pos, 8, "header")? != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let version = read_u32(buf, &mut pos, "header")?;
        if version != VERSION {
            return Err(ArchiveError::Version { found: version, expected: VERSION });
        }
        let count = read_u32(buf, &mut pos, "header")? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nl = read_u32(buf, &mut pos, "directory")? as usize;
            let name = String::from_utf8(take(buf, &mut pos, nl, "directory")?.to_vec())
                .map_err(|_| ArchiveError::Truncated("directory name is not UTF-8".into()))?;
            let dtype = Dtype::from_code(take(buf, &mut pos, 1, "directory")?[0])
                .ok_or_else(|| ArchiveError::Shape { name: name.clone(), msg: "unknown dtype".into() })?;
            let nd = read_u32(buf, &mut pos, "directory")? as usize;
            let mut shape = Vec::with_capacity(nd.min(16));
            for _ in 0..nd {
                shape.push(read_u64(buf, &mut pos, "directory")?);
            }
            let off = read_u64(buf, &mut pos, "directory")? as usize;
            let len = read_u64(buf, &mut pos, "directory")? as usize;
            let crc = read_u32(buf, &mut pos, "directory")?;
            entries.push((name, dtype, shape, off, len, crc));
        }
        let base = pos;
        let mut blocks = BTreeMap::new();
        for (name, dtype, shape, off, len, crc) in entries {
            let start = base.checked_add(off).ok_or_else(|| ArchiveError::Truncated(name.clone()))?;
            let end = start.checked_add(len).ok_or_else(|| ArchiveError::Truncated(name.clone()))?;
            if end > buf.len() {
                return Err(ArchiveError::Truncated(format!("payload of `{name}`")));
            }
            let bytes = buf[start..end].to_vec();
            if crc32fast::hash(&bytes) != crc {
                return Err(ArchiveError::Checksum(name));
            }
            let elems: u64 = shape.iter().product();
            if elems.checked_mul(dtype.size() as u64) != Some(len as u64) {
                return Err(ArchiveError::Shape { name, msg: "shape does not match payload length".into() });
            }
            blocks.insert(name, Block { dtype, shape, bytes });
        }
        Ok(Archive { blocks })
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Archive {
        let mut a = Archive::new();
        a.put_f64("m", &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, -0.0]);
        a.put_u64("idx", &[2], &[7, 9]);
        a.put_scalar("t", 1.5e-300);
        a.put_bytes("text", b"[mesh]\nnx = 3\n");
        a
    }

    #[test]
    fn round_trip_is_bitwise() {
        let a = sample();
        let bytes = a.to_bytes();
        let b = Archive::from_bytes(&bytes).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_inputs_are_typed_errors() {
        let bytes = sample().to_bytes();
        assert!(matches!(Archive::from_bytes(b"nope nope nope"), Err(ArchiveError::BadMagic)));
        let mut v = bytes.clone();
        v[8] = 99;
        assert!(matches!(Archive::from_bytes(&v), Err(ArchiveError::Version { found: 99, .. })));
        let mut c = bytes.clone();
        let last = c.len() - 1;
        c[last] ^= 0xff;
        assert!(matches!(Archive::from_bytes(&c), Err(ArchiveError::Checksum(_))));
        for cut in [10, 20, bytes.len() - 3] {
            assert!(matches!(Archive::from_bytes(&bytes[..cut]), Err(ArchiveError::Truncated(_))), "cut {cut}");
        }
        assert!(matches!(sample().block("absent"), Err(ArchiveError::MissingBlock(_))));
    }

    proptest! {
        #[test]
        fn arbitrary_blocks_round_trip(data in proptest::collection::vec(any::<f64>(), 0..64), name in "[a-z_]{1,12}") {
            let mut a = Archive::new();
            a.put_f64(&name, &[data.len()], &data);
            let b = Archive::from_bytes(&a.to_bytes()).unwrap();
            let (_, got) = b.get_f64(&name).unwrap();
            prop_assert!(got.iter().zip(&data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
