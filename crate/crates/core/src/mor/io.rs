//! Little-endian binary files for bases (`MORB`) and snapshot matrices (`MORS`).
//!
//! Header: 4-byte magic, `u32` version, `u64` n_free, `u64` m, `u64` ℓ.
//! A basis file continues with ℓ singular values and Φ column-major (n_free × m).
//! A snapshot file stores m = ℓ, then D column-major (n_free × ℓ) and the ℓ column times.

use std::path::Path;

use super::basis::{PodBasis, SnapshotMatrix};
use crate::error::{Error, Result};

pub const BASIS_MAGIC: &[u8; 4] = b"MORB";
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"MORS";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 3 * 8;

fn header(magic: &[u8; 4], n: usize, m: usize, l: usize, payload: usize) -> Vec<u8> {
    let mut b = Vec::with_capacity(HEADER + 8 * payload);
    b.extend_from_slice(magic);
    b.extend_from_slice(&VERSION.to_le_bytes());
    for v in [n, m, l] {
        b.extend_from_slice(&(v as u64).to_le_bytes());
    }
    b
}

fn push_f64s(b: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_basis(basis: &PodBasis) -> Vec<u8> {
    let mut b = header(BASIS_MAGIC, basis.n_free, basis.m, basis.sigma.len(), basis.sigma.len() + basis.phi.len());
    push_f64s(&mut b, &basis.sigma);
    push_f64s(&mut b, &basis.phi);
    b
}

pub fn encode_snapshots(d: &SnapshotMatrix) -> Vec<u8> {
    let l = d.n_columns();
    let mut b = header(SNAPSHOT_MAGIC, d.n_free, l, l, d.data.len() + l);
    push_f64s(&mut b, &d.data);
    push_f64s(&mut b, &d.times);
    b
}

struct Parsed<'a> {
    n: usize,
    m: usize,
    l: usize,
    body: &'a [u8],
}

fn parse<'a>(bytes: &'a [u8], magic: &[u8; 4], path: &Path) -> Result<Parsed<'a>> {
    if bytes.len() < HEADER {
        return Err(Error::format(path, "file shorter than header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            path,
            format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
        ));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let read = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes")) as usize;
    Ok(Parsed {
        n: read(8),
        m: read(16),
        l: read(24),
        body: &bytes[HEADER..],
    })
}

fn f64s(body: &[u8], count: usize) -> Vec<f64> {
    body[..8 * count]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

fn expect_len(p: &Parsed, count: Option<usize>, path: &Path) -> Result<usize> {
    let count = count.ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    match count.checked_mul(8) {
        Some(b) if b == p.body.len() => Ok(count),
        _ => Err(Error::format(
            path,
            format!("expected {} payload values, found {} bytes", count, p.body.len()),
        )),
    }
}

pub fn decode_basis(bytes: &[u8], path: &Path) -> Result<PodBasis> {
    let p = parse(bytes, BASIS_MAGIC, path)?;
    if p.m == 0 || p.m > p.l || p.m > p.n {
        return Err(Error::format(path, format!("invalid mode count {} for n = {}, ℓ = {}", p.m, p.n, p.l)));
    }
    expect_len(&p, p.n.checked_mul(p.m).and_then(|x| x.checked_add(p.l)), path)?;
    let sigma = f64s(p.body, p.l);
    let phi = f64s(&p.body[8 * p.l..], p.n * p.m);
    Ok(PodBasis {
        n_free: p.n,
        m: p.m,
        phi,
        sigma,
    })
}

pub fn decode_snapshots(bytes: &[u8], path: &Path) -> Result<SnapshotMatrix> {
    let p = parse(bytes, SNAPSHOT_MAGIC, path)?;
    if p.m != p.l {
        return Err(Error::format(path, "snapshot header column counts disagree"));
    }
    expect_len(&p, p.n.checked_mul(p.l).and_then(|x| x.checked_add(p.l)), path)?;
    let data = f64s(p.body, p.n * p.l);
    let times = f64s(&p.body[8 * p.n * p.l..], p.l);
    Ok(SnapshotMatrix {
        n_free: p.n,
        data,
        times,
    })
}

pub fn save_basis(basis: &PodBasis, path: &Path) -> Result<()> {
    std::fs::write(path, encode_basis(basis)).map_err(|e| Error::io(path, e))
}

pub fn load_basis(path: &Path) -> Result<PodBasis> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_basis(&bytes, path)
}

pub fn save_snapshots(d: &SnapshotMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, encode_snapshots(d)).map_err(|e| Error::io(path, e))
}

pub fn load_snapshots(path: &Path) -> Result<SnapshotMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshots(&bytes, path)
}
