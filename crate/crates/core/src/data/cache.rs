//! Binary split cache.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "CFDS" | version | basis (0 user, 1 item) | entities | targets | K | count
//! then `count` records of (entity, target, rating), entity-major, target-ascending
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Basis, RatingDataset};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"CFDS";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache<W: Write>(dataset: &RatingDataset, mut out: W) -> Result<()> {
    out.write_all(CACHE_MAGIC)?;
    let basis = match dataset.basis {
        Basis::User => 0u32,
        Basis::Item => 1,
    };
    for v in [
        CACHE_VERSION,
        basis,
        dataset.num_entities() as u32,
        dataset.num_targets as u32,
        dataset.scale as u32,
        dataset.len() as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for (e, t, r) in dataset.triples() {
        out.write_all(&e.to_le_bytes())?;
        out.write_all(&t.to_le_bytes())?;
        out.write_all(&(r as u32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cache<R: Read>(mut input: R) -> Result<RatingDataset> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::format("CFDS", "truncated header"))?;
    if &magic != CACHE_MAGIC {
        return Err(Error::format("CFDS", format!("bad magic {magic:?}")));
    }
    let mut read_u32 = |what: &str| -> Result<u32> {
        let mut b = [0u8; 4];
        input
            .read_exact(&mut b)
            .map_err(|_| Error::format("CFDS", format!("truncated while reading {what}")))?;
        Ok(u32::from_le_bytes(b))
    };
    let version = read_u32("version")?;
    if version != CACHE_VERSION {
        return Err(Error::format("CFDS", format!("unsupported version {version}")));
    }
    let basis = match read_u32("basis")? {
        0 => Basis::User,
        1 => Basis::Item,
        other => return Err(Error::format("CFDS", format!("unknown basis tag {other}"))),
    };
    let entities = read_u32("entity count")? as usize;
    let targets = read_u32("target count")? as usize;
    let scale = read_u32("rating scale")? as usize;
    let count = read_u32("rating count")? as usize;
    let mut triples = Vec::with_capacity(count);
    for _ in 0..count {
        let e = read_u32("entity")?;
        let t = read_u32("target")?;
        let r = read_u32("rating")?;
        if r > u8::MAX as u32 {
            return Err(Error::format("CFDS", format!("rating {r} too large")));
        }
        triples.push((e, t, r as u8));
    }
    RatingDataset::from_triples(basis, entities, targets, scale, triples)
}

pub fn write_cache_file(dataset: &RatingDataset, path: impl AsRef<Path>) -> Result<()> {
    write_cache(dataset, BufWriter::new(File::create(path)?))
}

pub fn read_cache_file(path: impl AsRef<Path>) -> Result<RatingDataset> {
    read_cache(BufReader::new(File::open(path)?))
}
