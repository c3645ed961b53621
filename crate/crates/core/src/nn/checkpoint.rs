//! `.cchk` checkpoint files.
//!
//! Layout (little-endian): magic `CCHK`, `u32` version, `u32` header length
//! and a UTF-8 JSON header holding the architecture descriptor and tag,
//! `u32` tensor count, then per tensor: `u32` name length, UTF-8 name,
//! `u32` rank, `u32` dims, `f32` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::descriptor::ArchitectureDescriptor;
use super::params::ParameterSet;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CCHK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    descriptor: ArchitectureDescriptor,
    tag: String,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn write_checkpoint(model: &ParameterSet) -> Result<Vec<u8>> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let header = Header { descriptor: model.descriptor().clone(), tag: model.tag.clone() };
    let json = serde_json::to_string(&header).map_err(|e| Error::checkpoint(e.to_string()))?;
    put_str(&mut out, &json);
    put_u32(&mut out, model.len());
    for (name, t) in model.iter() {
        put_str(&mut out, name);
        put_u32(&mut out, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::checkpoint("invalid UTF-8"))
    }
}

pub fn read_checkpoint(data: &[u8]) -> Result<ParameterSet> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::checkpoint("bad magic"));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let header: Header =
        serde_json::from_str(&r.string()?).map_err(|e| Error::checkpoint(format!("bad header: {e}")))?;
    let count = r.u32()?;
    let mut named = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()?;
        if rank > 8 {
            return Err(Error::checkpoint(format!("tensor {name}: implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::checkpoint("tensor size overflow"))?;
        let bytes = r.take(n.checked_mul(4).ok_or_else(|| Error::checkpoint("tensor size overflow"))?)?;
        let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let t = Tensor::new(&shape, values).map_err(|e| Error::checkpoint(e.to_string()))?;
        named.push((name, t));
    }
    if r.pos != data.len() {
        return Err(Error::checkpoint("trailing bytes after last tensor"));
    }
    ParameterSet::from_parts(header.descriptor, header.tag, named)
        .map_err(|e| Error::checkpoint(format!("shape mismatch: {e}")))
}

pub fn save_checkpoint(model: &ParameterSet, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(model)?;
    // write-then-rename so readers never see a partial file
    let tmp = path.with_extension("cchk.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterSet> {
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_model;

    #[test]
    fn roundtrip_bit_identical() {
        let m = build_model(&ArchitectureDescriptor::segmenter(6), 11).unwrap();
        let back = read_checkpoint(&write_checkpoint(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
    }

    #[test]
    fn truncation_and_corruption() {
        let m = build_model(&ArchitectureDescriptor::ac_net(), 1).unwrap();
        let bytes = write_checkpoint(&m).unwrap();
        for cut in [0, 3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(read_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        let err = read_checkpoint(&bad).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(&bad), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = build_model(&ArchitectureDescriptor::classifier(5), 1).unwrap();
        let mut bytes = write_checkpoint(&m).unwrap();
        // swap in a header describing a 4-class model
        let other = build_model(&ArchitectureDescriptor::classifier(4), 1).unwrap();
        let other_bytes = write_checkpoint(&other).unwrap();
        let hlen = |b: &[u8]| u32::from_le_bytes([b[8], b[9], b[10], b[11]]) as usize;
        let (h1, h2) = (hlen(&bytes), hlen(&other_bytes));
        bytes.splice(8..12 + h1, other_bytes[8..12 + h2].iter().copied());
        let err = read_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }
}
