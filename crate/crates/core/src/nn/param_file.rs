//! Binary weight files.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic        4 bytes  "VSPW"
//! version      u16      FORMAT_VERSION
//! config hash  u64
//! entry count  u32
//! per entry:
//!   name length  u16, then that many bytes of UTF-8
//!   rank         u8
//!   dims         rank x u32
//!   values       prod(dims) x f32, row-major
//! ```

use std::io::{self, Write};

use thiserror::Error;

use super::{ParamStore, ParamStoreBuilder};

pub const MAGIC: &[u8; 4] = b"VSPW";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ParamFileError {
    #[error("bad magic at byte 0: expected \"VSPW\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {found} at byte {offset} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { offset: usize, found: u16 },
    #[error("config hash mismatch at byte {offset}: file {found:016x}, expected {expected:016x}")]
    HashMismatch {
        offset: usize,
        found: u64,
        expected: u64,
    },
    #[error("truncated file: needed {needed} bytes at byte {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid entry at byte {offset}: {reason}")]
    InvalidEntry { offset: usize, reason: String },
    #[error("{extra} trailing bytes after the last entry at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("value of {name} is not representable as f32")]
    NotRepresentable { name: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Serializes `store`. Values must be exactly representable as `f32`.
pub fn write_params<W: Write>(store: &ParamStore, mut w: W) -> Result<(), ParamFileError> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&store.config_hash().to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.shape().len() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            let f = v as f32;
            if f64::from(f) != v {
                return Err(ParamFileError::NotRepresentable {
                    name: name.to_string(),
                });
            }
            w.write_all(&f.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn params_to_bytes(store: &ParamStore) -> Result<Vec<u8>, ParamFileError> {
    let mut buf = Vec::new();
    write_params(store, &mut buf)?;
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ParamFileError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(ParamFileError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ParamFileError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Parses a weight file. With `expected_hash`, a differing header hash is
/// rejected.
pub fn read_params(bytes: &[u8], expected_hash: Option<u64>) -> Result<ParamStore, ParamFileError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4).map_err(|_| ParamFileError::BadMagic {
        found: bytes[..bytes.len().min(4)].to_vec(),
    })?;
    if magic != MAGIC {
        return Err(ParamFileError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let offset = cur.pos;
    let version = u16::from_le_bytes(cur.array()?);
    if version != FORMAT_VERSION {
        return Err(ParamFileError::UnsupportedVersion {
            offset,
            found: version,
        });
    }
    let offset = cur.pos;
    let hash = u64::from_le_bytes(cur.array()?);
    if let Some(expected) = expected_hash {
        if hash != expected {
            return Err(ParamFileError::HashMismatch {
                offset,
                found: hash,
                expected,
            });
        }
    }
    let count = u32::from_le_bytes(cur.array()?);
    let mut builder = ParamStoreBuilder::new(hash);
    for _ in 0..count {
        let entry_offset = cur.pos;
        let name_len = u16::from_le_bytes(cur.array()?) as usize;
        let name =
            std::str::from_utf8(cur.take(name_len)?).map_err(|_| ParamFileError::InvalidEntry {
                offset: entry_offset,
                reason: "name is not UTF-8".into(),
            })?;
        let rank = cur.array::<1>()?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(cur.array()?) as usize);
        }
        let size = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|s| s.checked_mul(4).map(|_| s))
            .ok_or_else(|| ParamFileError::InvalidEntry {
                offset: entry_offset,
                reason: format!("shape {shape:?} overflows"),
            })?;
        let raw = cur.take(size * 4)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
            .collect();
        builder
            .insert(name, &shape, data)
            .map_err(|e| ParamFileError::InvalidEntry {
                offset: entry_offset,
                reason: e.to_string(),
            })?;
    }
    if cur.pos != bytes.len() {
        return Err(ParamFileError::TrailingBytes {
            offset: cur.pos,
            extra: bytes.len() - cur.pos,
        });
    }
    Ok(builder.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, NetConfig};
    use proptest::prelude::*;

    fn toy_bytes() -> (ParamStore, Vec<u8>) {
        let store = init_params(&NetConfig::toy(), 3).unwrap();
        let bytes = params_to_bytes(&store).unwrap();
        (store, bytes)
    }

    #[test]
    fn round_trip_is_exact() {
        let (store, bytes) = toy_bytes();
        let back = read_params(&bytes, Some(NetConfig::toy().hash())).unwrap();
        assert_eq!(back, store);
    }

    #[test]
    fn header_layout() {
        let (store, bytes) = toy_bytes();
        assert_eq!(&bytes[..4], b"VSPW");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(
            u64::from_le_bytes(bytes[6..14].try_into().unwrap()),
            store.config_hash()
        );
        assert_eq!(
            u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize,
            store.len()
        );
    }

    #[test]
    fn mutated_hash_byte_is_rejected() {
        let (_, mut bytes) = toy_bytes();
        bytes[9] ^= 0x40;
        match read_params(&bytes, Some(NetConfig::toy().hash())) {
            Err(ParamFileError::HashMismatch { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_magic_and_version() {
        let (_, bytes) = toy_bytes();
        let mut m = bytes.clone();
        m[0] = b'X';
        assert!(matches!(
            read_params(&m, None),
            Err(ParamFileError::BadMagic { .. })
        ));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            read_params(&v, None),
            Err(ParamFileError::UnsupportedVersion {
                offset: 4,
                found: 9
            })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let (_, bytes) = toy_bytes();
        let cut = &bytes[..bytes.len() - 3];
        match read_params(cut, None) {
            Err(ParamFileError::Truncated {
                offset,
                needed,
                available,
            }) => {
                assert!(offset < cut.len());
                assert!(needed > available);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_params(&bytes[..2], None),
            Err(ParamFileError::BadMagic { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let (_, mut bytes) = toy_bytes();
        bytes.push(0);
        assert!(matches!(
            read_params(&bytes, None),
            Err(ParamFileError::TrailingBytes { extra: 1, .. })
        ));
    }

    #[test]
    fn unrepresentable_values_refused() {
        let mut b = ParamStoreBuilder::new(0);
        b.insert("x", &[1], vec![0.1]).unwrap();
        assert!(matches!(
            params_to_bytes(&b.build()),
            Err(ParamFileError::NotRepresentable { .. })
        ));
    }

    proptest! {
        #[test]
        fn arbitrary_f32_stores_round_trip(
            vals in proptest::collection::vec(-1e6f32..1e6, 1..40),
            hash in any::<u64>(),
        ) {
            let mut b = ParamStoreBuilder::new(hash);
            b.insert("a.weight", &[vals.len()], vals.iter().map(|&v| f64::from(v)).collect()).unwrap();
            b.insert("b", &[1, 1], vec![f64::from(vals[0])]).unwrap();
            let store = b.build();
            let back = read_params(&params_to_bytes(&store).unwrap(), Some(hash)).unwrap();
            prop_assert_eq!(back, store);
        }
    }
}
