//! Binary parameter container with a text manifest alongside.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "DVIOCKPT"
//! version  u32      1
//! count    u32      number of records
//! record*  name_len u32, name utf-8, rank u32, extents u64 * rank,
//!          values f64 * prod(extents)
//! ```
//!
//! The manifest (`<file>.manifest`) lists `param <name> <d0>x<d1>...` lines
//! followed by free-form `key = value` metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DVIOCKPT";
pub const VERSION: u32 = 1;

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.numel() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let t = store.value(id);
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.add(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(store)
}

pub fn manifest(store: &ParamStore, meta: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for id in store.ids() {
        let dims: Vec<String> = store.value(id).shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "param {} {}", store.name(id), dims.join("x"));
    }
    for (k, v) in meta {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn save(path: &Path, store: &ParamStore, meta: &BTreeMap<String, String>) -> Result<()> {
    std::fs::write(path, encode(store)).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest(store, meta)).map_err(|e| Error::io(mpath, e))
}

/// Loads parameters and the manifest metadata.
pub fn load(path: &Path) -> Result<(ParamStore, BTreeMap<String, String>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = decode(&bytes)?;
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut meta = BTreeMap::new();
    for line in text.lines() {
        if line.starts_with("param ") {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok((store, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_preserves_bits(
            tensors in proptest::collection::vec(
                proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 1..12),
                1..5,
            )
        ) {
            let mut store = ParamStore::new();
            for (i, t) in tensors.iter().enumerate() {
                store.add(format!("p{i}.w"), Tensor::vector(t.clone())).unwrap();
            }
            let back = decode(&encode(&store)).unwrap();
            prop_assert_eq!(back.len(), store.len());
            for id in store.ids() {
                prop_assert_eq!(back.name(id), store.name(id));
                let (a, b) = (back.value(id), store.value(id));
                prop_assert_eq!(a.shape(), b.shape());
                for (x, y) in a.data().iter().zip(b.data()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn layout_is_fixed() {
        let mut store = ParamStore::new();
        store
            .add("ab", Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap())
            .unwrap();
        let b = encode(&store);
        assert_eq!(&b[..8], b"DVIOCKPT");
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &2u32.to_le_bytes());
        assert_eq!(&b[20..22], b"ab");
        assert_eq!(&b[22..26], &2u32.to_le_bytes());
        assert_eq!(&b[26..34], &1u64.to_le_bytes());
        assert_eq!(&b[34..42], &2u64.to_le_bytes());
        assert_eq!(&b[42..50], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 58);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        assert!(decode(b"NOTACKPT").is_err());
        let mut store = ParamStore::new();
        store.add("x", Tensor::vector(vec![1.0])).unwrap();
        let b = encode(&store);
        assert!(decode(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn save_and_load_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = ParamStore::new();
        store.add("enc.w", Tensor::zeros(&[2, 3])).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("epoch".to_string(), "4".to_string());
        save(&path, &store, &meta).unwrap();
        let text = std::fs::read_to_string(manifest_path(&path)).unwrap();
        assert!(text.contains("param enc.w 2x3"));
        let (back, meta2) = load(&path).unwrap();
        assert_eq!(back.value(back.id("enc.w").unwrap()).shape(), &[2, 3]);
        assert_eq!(meta2["epoch"], "4");
    }
}
