//! Binary container for trains.
//!
//! Layout (all integers little-endian):
//! `b"STTT"`, `u32` version, `u8` kind (0 vector, 1 matrix), `u8` quantized flag,
//! two zero bytes, `u32` d, `d × u64` row/mode sizes, for matrices `d × u64` column
//! sizes, `(d+1) × u64` ranks, an optional factorization header, then every core's
//! entries as `f64` in storage order.
//!
//! The factorization header lists, per original mode, the radices of the row split
//! and (for matrices) of the column split: `u32` group count, then for each group a
//! `u32` length followed by that many `u64` radices.

use std::io::{Read, Write};
use std::path::Path;

use super::{Core, TtMatrix, TtVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STTT";
const VERSION: u32 = 1;

/// Per-mode radix lists describing how a quantized train maps back to its original modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorizationHeader {
    pub row_radices: Vec<Vec<usize>>,
    /// Empty for vector trains.
    pub col_radices: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTrain {
    Vector(TtVector),
    Matrix(TtMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub train: StoredTrain,
    pub factorization: Option<FactorizationHeader>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| fmt_err(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| fmt_err(format!("truncated header: {e}")))?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| fmt_err("size does not fit in usize"))
}

fn put_groups(w: &mut impl Write, groups: &[Vec<usize>]) -> Result<()> {
    put_u32(w, groups.len() as u32)?;
    for g in groups {
        put_u32(w, g.len() as u32)?;
        for &v in g {
            put_u64(w, v)?;
        }
    }
    Ok(())
}

fn get_groups(r: &mut impl Read) -> Result<Vec<Vec<usize>>> {
    let count = get_u32(r)? as usize;
    if count > 1 << 20 {
        return Err(fmt_err("implausible factorization group count"));
    }
    let mut groups = Vec::with_capacity(count);
    for _ in 0..count {
        let len = get_u32(r)? as usize;
        if len > 64 {
            return Err(fmt_err("implausible radix count"));
        }
        groups.push((0..len).map(|_| get_u64(r)).collect::<Result<Vec<_>>>()?);
    }
    Ok(groups)
}

pub fn write_container(w: &mut impl Write, c: &Container) -> Result<()> {
    let (kind, train, rows, cols) = match &c.train {
        StoredTrain::Vector(v) => (0u8, v, v.mode_sizes(), Vec::new()),
        StoredTrain::Matrix(m) => (
            1u8,
            m.train(),
            m.row_sizes().to_vec(),
            m.col_sizes().to_vec(),
        ),
    };
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    w.write_all(&[kind, c.factorization.is_some() as u8, 0, 0])?;
    put_u32(w, train.d() as u32)?;
    for &n in &rows {
        put_u64(w, n)?;
    }
    for &n in &cols {
        put_u64(w, n)?;
    }
    put_u64(w, 1)?;
    for core in train.cores() {
        put_u64(w, core.r1)?;
    }
    if let Some(f) = &c.factorization {
        put_groups(w, &f.row_radices)?;
        if kind == 1 {
            put_groups(w, &f.col_radices)?;
        }
    }
    for core in train.cores() {
        for v in &core.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_container(r: &mut impl Read) -> Result<Container> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| fmt_err(format!("missing magic: {e}")))?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic bytes"));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported version {version}")));
    }
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags)
        .map_err(|e| fmt_err(format!("truncated header: {e}")))?;
    let (kind, quantized) = (flags[0], flags[1]);
    if kind > 1 || quantized > 1 {
        return Err(fmt_err("unknown kind or flag"));
    }
    let d = get_u32(r)? as usize;
    if d == 0 || d > 4096 {
        return Err(fmt_err(format!("implausible core count {d}")));
    }
    let rows = (0..d).map(|_| get_u64(r)).collect::<Result<Vec<_>>>()?;
    let cols = if kind == 1 {
        (0..d).map(|_| get_u64(r)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let ranks = (0..=d).map(|_| get_u64(r)).collect::<Result<Vec<_>>>()?;
    let factorization = if quantized == 1 {
        let row_radices = get_groups(r)?;
        let col_radices = if kind == 1 {
            get_groups(r)?
        } else {
            Vec::new()
        };
        Some(FactorizationHeader {
            row_radices,
            col_radices,
        })
    } else {
        None
    };
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let n = if kind == 1 {
            rows[k] * cols[k]
        } else {
            rows[k]
        };
        let count = ranks[k]
            .checked_mul(n)
            .and_then(|v| v.checked_mul(ranks[k + 1]))
            .ok_or_else(|| fmt_err("core size overflows"))?;
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| fmt_err(format!("truncated payload: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        cores.push(Core::new(ranks[k], n, ranks[k + 1], data).map_err(|e| fmt_err(e.to_string()))?);
    }
    let train = TtVector::new(cores).map_err(|e| fmt_err(e.to_string()))?;
    let train = if kind == 1 {
        StoredTrain::Matrix(
            TtMatrix::from_parts(rows, cols, train).map_err(|e| fmt_err(e.to_string()))?,
        )
    } else {
        StoredTrain::Vector(train)
    };
    Ok(Container {
        train,
        factorization,
    })
}

pub fn save(path: impl AsRef<Path>, c: &Container) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_container(&mut w, c)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Container> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_container(&mut r)
}
