//! Checkpoint files.
//!
//! ```text
//! "CFND" | version u32
//! M | K | H | L | J (0 = full rank) | share (0/1)      all u32 little-endian
//! every array in ParameterSet::groups() order, row-major, f64 little-endian
//! FNV-1a 64 of all preceding bytes, u64 little-endian
//! ```
//!
//! Values are always stored as `f64`, so an `f64` model round-trips bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterSet};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CFND";
pub const CHECKPOINT_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_update(FNV_OFFSET, bytes)
}

fn fnv1a_update(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub(crate) fn config_bytes(config: &ModelConfig) -> Vec<u8> {
    [
        config.num_items as u32,
        config.rating_scale as u32,
        config.hidden_units as u32,
        config.layers as u32,
        config.factor_rank.unwrap_or(0) as u32,
        config.share_ratings as u32,
    ]
    .iter()
    .flat_map(|v| v.to_le_bytes())
    .collect()
}

/// Writer that hashes everything passing through it.
struct Hashing<W> {
    inner: W,
    hash: u64,
}

impl<W: Write> Write for Hashing<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash = fnv1a_update(self.hash, &buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn save_checkpoint<T: Scalar, W: Write>(params: &ParameterSet<T>, out: W) -> Result<()> {
    let mut w = Hashing {
        inner: out,
        hash: FNV_OFFSET,
    };
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&config_bytes(params.config()))?;
    for g in params.groups() {
        for &v in params.get(g).as_slice() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    let digest = w.hash;
    let mut out = w.inner;
    out.write_all(&digest.to_le_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<ParameterSet<T>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let bad = |m: String| Error::format("CFND", m);
    if bytes.len() < 4 + 4 + 24 + 8 {
        return Err(bad(format!("{} bytes is too short for a checkpoint", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let actual = fnv1a(payload);
    if stored != actual {
        return Err(bad(format!(
            "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
        )));
    }
    let word = |i: usize| u32::from_le_bytes(payload[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let version = word(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let config = ModelConfig {
        num_items: word(1),
        rating_scale: word(2),
        hidden_units: word(3),
        layers: word(4),
        factor_rank: match word(5) {
            0 => None,
            j => Some(j),
        },
        share_ratings: match word(6) {
            0 => false,
            1 => true,
            other => return Err(bad(format!("share flag {other} is not 0 or 1"))),
        },
    };
    let body = &payload[32..];
    let expected = config.parameter_count() * 8;
    if body.len() != expected {
        return Err(bad(format!(
            "parameter block is {} bytes, config implies {expected}",
            body.len()
        )));
    }
    let mut params = ParameterSet::<T>::zeros(config)?;
    let flat: Vec<T> = body
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    params.set_flat(&flat);
    Ok(params)
}

pub fn save_checkpoint_file<T: Scalar>(params: &ParameterSet<T>, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint_file<T: Scalar>(path: impl AsRef<Path>) -> Result<ParameterSet<T>> {
    load_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;

    fn sample() -> ParameterSet<f64> {
        let config = ModelConfig {
            num_items: 4,
            rating_scale: 3,
            hidden_units: 5,
            layers: 2,
            factor_rank: Some(2),
            share_ratings: true,
        };
        ParameterSet::init(config, &mut SeededRng::new(8)).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = sample();
        let mut buf = Vec::new();
        save_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CFND");
        assert_eq!(buf.len(), 4 + 4 + 24 + 8 * p.len() + 8);
        let q: ParameterSet<f64> = load_checkpoint(&buf[..]).unwrap();
        let bits = |x: &ParameterSet<f64>| x.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert_eq!(p.config(), q.config());
    }

    #[test]
    fn corruption_is_detected() {
        let mut buf = Vec::new();
        save_checkpoint(&sample(), &mut buf).unwrap();
        buf[40] ^= 1;
        let err = load_checkpoint::<f64, _>(&buf[..]).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
