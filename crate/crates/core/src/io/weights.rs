//! The `PFADN001` named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PFADN001"
//! repeated, sorted by name:
//!     u16 name_len | name (UTF-8) | u8 rank | rank x u32 dims | f32 payload
//! ```
//!
//! A rank-0 entry carries exactly one value.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"PFADN001";

pub type NamedTensors = BTreeMap<String, Tensor<f32>>;

pub fn encode_weights(params: &NamedTensors) -> Result<Vec<u8>> {
    let mut out = WEIGHTS_MAGIC.to_vec();
    for (name, t) in params {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Config(format!("parameter name too long: {} bytes", name.len())))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| Error::Config(format!("rank {} of {name:?} exceeds 255", t.rank())))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Config(format!("dimension {d} of {name:?} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<NamedTensors> {
    if bytes.len() < WEIGHTS_MAGIC.len() || &bytes[..8] != WEIGHTS_MAGIC {
        return Err(Error::MagicMismatch { expected: "PFADN001" });
    }
    let mut cur = Cursor { bytes, pos: 8 };
    let mut out = NamedTensors::new();
    while cur.remaining() > 0 {
        let entry_start = cur.pos;
        let trailing = || Error::TrailingBytes(bytes.len() - entry_start);
        let name_len = cur.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as usize).ok_or_else(trailing)?;
        let name = cur.take(name_len).ok_or_else(trailing)?;
        let name = std::str::from_utf8(name).map_err(|_| trailing())?.to_owned();
        let rank = cur.take(1).ok_or_else(trailing)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cur.take(4).ok_or_else(trailing)?;
            shape.push(u32::from_le_bytes([d[0], d[1], d[2], d[3]]) as usize);
        }
        let count: usize = shape.iter().product();
        let payload = cur.take(count * 4).ok_or_else(|| Error::PayloadSizeMismatch {
            name: name.clone(),
            expected: count,
            found: cur.remaining() / 4,
        })?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let tensor = Tensor::new(shape, data)?;
        match out.entry(name) {
            Entry::Occupied(e) => return Err(Error::DuplicateName(e.key().clone())),
            Entry::Vacant(e) => {
                e.insert(tensor);
            }
        }
    }
    Ok(out)
}

pub fn save_weights(params: &NamedTensors, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NamedTensors> {
    let path = path.as_ref();
    decode_weights(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_is_just_magic() {
        assert_eq!(encode_weights(&NamedTensors::new()).unwrap(), b"PFADN001".to_vec());
        assert!(decode_weights(b"PFADN001").unwrap().is_empty());
    }

    #[test]
    fn scalar_entry_layout() {
        let mut p = NamedTensors::new();
        p.insert("b".into(), Tensor::scalar(0.0));
        let bytes = encode_weights(&p).unwrap();
        let mut expected = b"PFADN001".to_vec();
        expected.extend_from_slice(&[0x01, 0x00, b'b', 0x00, 0, 0, 0, 0]);
        assert_eq!(bytes, expected);
        assert_eq!(decode_weights(&bytes).unwrap(), p);
    }

    #[test]
    fn entries_are_sorted_by_name() {
        let mut p = NamedTensors::new();
        p.insert("zeta".into(), Tensor::scalar(1.0));
        p.insert("alpha".into(), Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let bytes = encode_weights(&p).unwrap();
        assert_eq!(&bytes[8..10], &5u16.to_le_bytes());
        assert_eq!(&bytes[10..15], b"alpha");
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(matches!(decode_weights(b"PFADN002"), Err(Error::MagicMismatch { .. })));

        let mut p = NamedTensors::new();
        p.insert("w".into(), Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let good = encode_weights(&p).unwrap();

        let mut trailing = good.clone();
        trailing.extend_from_slice(b"xyz");
        assert!(matches!(decode_weights(&trailing), Err(Error::TrailingBytes(3))));

        let short = &good[..good.len() - 4];
        assert!(matches!(decode_weights(short), Err(Error::PayloadSizeMismatch { .. })));

        let mut dup = good.clone();
        dup.extend_from_slice(&good[8..]);
        assert!(matches!(decode_weights(&dup), Err(Error::DuplicateName(n)) if n == "w"));
    }
}
