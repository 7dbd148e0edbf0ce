//! SESP feature cache.
//!
//! ```text
//! "SESP"  u16 version  u64 record_count
//! per record:
//!   u16 member  u32 event  u32 window
//!   f32 f  f32 w  f32 o  u64 seed
//!   u32 H  u32 W  u8 label
//!   3*H*W f32 values
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::msfs::{FeatureRecord, SamplingParams};

pub const SESP_MAGIC: &[u8; 4] = b"SESP";
pub const SESP_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheRecordHeader {
    pub member: u16,
    pub event: u32,
    pub window: u32,
    pub f: f32,
    pub w: f32,
    pub o: f32,
    pub seed: u64,
    pub height: u32,
    pub width: u32,
    pub label: u8,
}

pub fn write_feature_cache(path: impl AsRef<Path>, records: &[FeatureRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode(&mut buf, records)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn encode(buf: &mut Vec<u8>, records: &[FeatureRecord]) -> Result<()> {
    buf.write_all(SESP_MAGIC).unwrap();
    buf.extend_from_slice(&SESP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        if r.stacked.len() != 3 * r.height * r.width {
            return Err(Error::Cache(format!(
                "record (member {}, event {}, window {}) holds {} values for 3x{}x{}",
                r.member,
                r.event,
                r.window,
                r.stacked.len(),
                r.height,
                r.width
            )));
        }
        buf.extend_from_slice(&r.member.to_le_bytes());
        buf.extend_from_slice(&r.event.to_le_bytes());
        buf.extend_from_slice(&r.window.to_le_bytes());
        buf.extend_from_slice(&(r.params.f as f32).to_le_bytes());
        buf.extend_from_slice(&(r.params.w as f32).to_le_bytes());
        buf.extend_from_slice(&(r.params.o as f32).to_le_bytes());
        buf.extend_from_slice(&r.params.seed.to_le_bytes());
        buf.extend_from_slice(&(r.height as u32).to_le_bytes());
        buf.extend_from_slice(&(r.width as u32).to_le_bytes());
        buf.push(r.label);
        for v in &r.stacked {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        (&self.bytes[self.pos.min(self.bytes.len())..])
            .read_exact(&mut out)
            .map_err(|_| Error::Cache(format!("truncated cache at byte {}", self.pos)))?;
        self.pos += N;
        Ok(out)
    }
}

fn decode(bytes: &[u8]) -> Result<Vec<FeatureRecord>> {
    let mut rd = Reader { bytes, pos: 0 };
    if &rd.take::<4>()? != SESP_MAGIC {
        return Err(Error::Cache("bad magic (not a SESP file)".into()));
    }
    let version = u16::from_le_bytes(rd.take()?);
    if version != SESP_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(rd.take()?) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let h = CacheRecordHeader {
            member: u16::from_le_bytes(rd.take()?),
            event: u32::from_le_bytes(rd.take()?),
            window: u32::from_le_bytes(rd.take()?),
            f: f32::from_le_bytes(rd.take()?),
            w: f32::from_le_bytes(rd.take()?),
            o: f32::from_le_bytes(rd.take()?),
            seed: u64::from_le_bytes(rd.take()?),
            height: u32::from_le_bytes(rd.take()?),
            width: u32::from_le_bytes(rd.take()?),
            label: rd.take::<1>()?[0],
        };
        let n = 3 * h.height as usize * h.width as usize;
        let mut stacked = Vec::with_capacity(n);
        for _ in 0..n {
            stacked.push(f32::from_le_bytes(rd.take()?));
        }
        records.push(FeatureRecord {
            member: h.member,
            event: h.event,
            window: h.window,
            params: SamplingParams::from_stored(h.f, h.w, h.o, h.seed)?,
            label: h.label,
            height: h.height as usize,
            width: h.width as usize,
            stacked,
        });
    }
    if rd.pos != bytes.len() {
        return Err(Error::Cache(format!("{} trailing bytes", bytes.len() - rd.pos)));
    }
    Ok(records)
}
