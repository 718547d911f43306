//! `CWC1` weight containers.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CWC1" | u32 version | u32 entry count
//! per entry: u32 name length | name (UTF-8) | u8 rank | rank × u32 extents
//!            | u8 precision flag | u64 payload offset | u64 payload length
//! payloads: one CTF1 tensor per entry, offsets relative to the payload start
//! ```
//!
//! Entries are stored sorted by name, so saving the same container always
//! produces the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{decode_tensor, encode_tensor};
use crate::tensor::{Precision, Tensor};

pub const CWC_MAGIC: &[u8; 4] = b"CWC1";
pub const CWC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightContainer {
    entries: BTreeMap<String, Tensor>,
    widened: bool,
}

fn entry_err(entry: &str, msg: impl Into<String>) -> Error {
    Error::Container { entry: entry.to_string(), msg: msg.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| entry_err(what, "truncated manifest"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    precision: Precision,
    offset: usize,
    len: usize,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries.get(name).ok_or_else(|| entry_err(name, "missing"))
    }

    /// Entry `name`, which must have exactly `shape`.
    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self.get(name)?;
        if t.shape() != shape {
            return Err(entry_err(name, format!("shape {:?}, expected {shape:?}", t.shape())));
        }
        Ok(t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// True when single-precision payloads were widened on load.
    pub fn widened(&self) -> bool {
        self.widened
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payloads: Vec<Vec<u8>> = self.entries.values().map(encode_tensor).collect();
        let mut out = Vec::new();
        out.extend_from_slice(CWC_MAGIC);
        out.extend_from_slice(&CWC_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for ((name, t), p) in self.entries.iter().zip(&payloads) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            out.push(t.precision().flag());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(p.len() as u64).to_le_bytes());
            offset += p.len() as u64;
        }
        for p in payloads {
            out.extend_from_slice(&p);
        }
        out
    }

    /// Parse a container. Every payload must agree with its manifest entry and
    /// the payloads must exactly tile the remainder of the file.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "<header>")? != CWC_MAGIC {
            return Err(entry_err("<header>", "bad magic"));
        }
        let version = r.u32("<header>")?;
        if version != CWC_VERSION {
            return Err(entry_err("<header>", format!("unsupported version {version}")));
        }
        let count = r.u32("<header>")? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32("<manifest>")? as usize;
            let name = std::str::from_utf8(r.take(len, "<manifest>")?)
                .map_err(|_| entry_err("<manifest>", "name is not UTF-8"))?
                .to_string();
            let rank = r.u8(&name)? as usize;
            let shape = (0..rank).map(|_| r.u32(&name).map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
            let flag = r.u8(&name)?;
            let precision =
                Precision::from_flag(flag).ok_or_else(|| entry_err(&name, format!("unknown precision flag {flag}")))?;
            let offset = r.u64(&name)? as usize;
            let len = r.u64(&name)? as usize;
            manifest.push(ManifestEntry { name, shape, precision, offset, len });
        }
        let payload = &bytes[r.pos..];
        let mut entries = BTreeMap::new();
        let mut expected_offset = 0usize;
        for m in manifest {
            if m.offset != expected_offset {
                return Err(entry_err(&m.name, format!("payload offset {} but expected {expected_offset}", m.offset)));
            }
            let end = m
                .offset
                .checked_add(m.len)
                .filter(|&e| e <= payload.len())
                .ok_or_else(|| entry_err(&m.name, "payload truncated"))?;
            let t = decode_tensor(&payload[m.offset..end]).map_err(|e| entry_err(&m.name, e.to_string()))?;
            if t.shape() != m.shape || t.precision() != m.precision {
                return Err(entry_err(
                    &m.name,
                    format!(
                        "payload is {:?} {} but manifest says {:?} {}",
                        t.shape(),
                        t.precision().name(),
                        m.shape,
                        m.precision.name()
                    ),
                ));
            }
            if entries.insert(m.name.clone(), t).is_some() {
                return Err(entry_err(&m.name, "duplicate entry"));
            }
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return Err(entry_err("<payload>", format!("{} trailing bytes", payload.len() - expected_offset)));
        }
        Ok(WeightContainer { entries, widened: false })
    }

    /// Convert every entry to `precision`. Widening sets [`Self::widened`];
    /// narrowing double payloads is refused.
    pub fn into_precision(mut self, precision: Precision) -> Result<Self> {
        for (name, t) in self.entries.iter_mut() {
            match (t.precision(), precision) {
                (a, b) if a == b => {}
                (Precision::Single, Precision::Double) => {
                    *t = t.to_precision(Precision::Double);
                    self.widened = true;
                }
                _ => return Err(entry_err(name, "refusing to narrow a double payload to single precision")),
            }
        }
        Ok(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightContainer {
        let mut w = WeightContainer::new();
        w.insert("b.bias", Tensor::from_f64(&[3], vec![0.1, -0.2, 0.3]).unwrap());
        w.insert("a.kernel", Tensor::new(&[2, 2], vec![1.5, 2.25, -3.0, 0.1], Precision::Single).unwrap());
        w
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let w = sample();
        let bytes = w.to_bytes();
        let back = WeightContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.names().collect::<Vec<_>>(), ["a.kernel", "b.bias"]);
    }

    #[test]
    fn truncation_is_rejected_everywhere() {
        let bytes = sample().to_bytes();
        for cut in 0..bytes.len() {
            assert!(WeightContainer::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(WeightContainer::from_bytes(&extra).is_err());
    }

    #[test]
    fn manifest_mismatch_names_the_entry() {
        let mut bytes = sample().to_bytes();
        // First entry "a.kernel": 12-byte header, 4-byte length, 8-byte name, rank, first extent.
        let extent_at = 12 + 4 + 8 + 1;
        bytes[extent_at] = 9;
        match WeightContainer::from_bytes(&bytes) {
            Err(Error::Container { entry, .. }) => assert_eq!(entry, "a.kernel"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn widening_is_flagged_and_exact() {
        let w = sample().into_precision(Precision::Double).unwrap();
        assert!(w.widened());
        let k = w.get("a.kernel").unwrap();
        assert_eq!(k.precision(), Precision::Double);
        for &v in k.data() {
            assert_eq!(v, v as f32 as f64);
        }
        assert!(sample().into_precision(Precision::Single).is_err());
    }

    #[test]
    fn shape_checked_lookup() {
        let w = sample();
        assert!(w.get_shaped("b.bias", &[3]).is_ok());
        assert!(matches!(w.get_shaped("b.bias", &[1, 3]), Err(Error::Container { .. })));
        assert!(matches!(w.get("nope"), Err(Error::Container { .. })));
    }
}
