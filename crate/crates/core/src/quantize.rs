//! Quantized trains: every mode is split into a chain of small prime radices.
//!
//! Digits are ordered first-slowest, so mode index `i` of size `q1·q2·…·qL` maps to
//! digits with `i = ((i1·q2 + i2)·q3 + i3)…`. Operator modes split rows and columns
//! jointly; the merged digit index of level `l` is `row_digit + p_l·col_digit`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::tt::{tt_from_dense, tt_round, Core, DenseTensor, Train, TtMatrix, TtVector};

/// Near-exact tolerance used when splitting a single core into its digit chain.
const SPLIT_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeFactorization {
    pub original_size: usize,
    pub radices: Vec<usize>,
}

/// Prime factorization, smallest factors first; primes and 1 stay unsplit.
pub fn factor_mode(n: usize) -> Result<ModeFactorization> {
    if n == 0 {
        return Err(invalid("factor_mode: mode size must be positive"));
    }
    let mut radices = Vec::new();
    let mut rest = n;
    let mut p = 2;
    while p * p <= rest {
        while rest % p == 0 {
            radices.push(p);
            rest /= p;
        }
        p += 1;
    }
    if rest > 1 || radices.is_empty() {
        radices.push(rest);
    }
    Ok(ModeFactorization {
        original_size: n,
        radices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub train: TtVector,
    pub factors: Vec<ModeFactorization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    pub op: TtMatrix,
    pub row_factors: Vec<ModeFactorization>,
    pub col_factors: Vec<ModeFactorization>,
}

/// Radix lists padded with 1s to a common length.
fn padded(f: &ModeFactorization, len: usize) -> Vec<usize> {
    let mut r = f.radices.clone();
    r.resize(len, 1);
    r
}

/// Splits one core `(r0, n, r1)` whose entry is `entry(a, digits, b)` into a chain over
/// the given digit sizes.
fn split_core(
    r0: usize,
    r1: usize,
    digit_sizes: &[usize],
    entry: impl Fn(usize, &[usize], usize) -> f64,
) -> Result<Vec<Core>> {
    let l = digit_sizes.len();
    let mut shape = vec![r0];
    shape.extend_from_slice(digit_sizes);
    shape.push(r1);
    let dense = DenseTensor::from_fn(&shape, |idx| entry(idx[0], &idx[1..=l], idx[l + 1]));
    if dense.norm() == 0.0 {
        let mut cores: Vec<Core> = digit_sizes.iter().map(|&q| Core::zeros(1, q, 1)).collect();
        cores[0] = Core::zeros(r0, digit_sizes[0], 1);
        let last = cores.len() - 1;
        cores[last] = Core::zeros(cores[last].r0, digit_sizes[l - 1], r1);
        return Ok(cores);
    }
    let chain = tt_from_dense(&dense, SPLIT_TOL, usize::MAX)?.into_cores();
    // chain = [ (1,r0,t1), (t1,q1,t2), ..., (tL,qL,t_{L+1}), (t_{L+1},r1,1) ]
    let head = &chain[0];
    let tail = &chain[l + 1];
    let mut cores: Vec<Core> = chain[1..=l].to_vec();
    // Absorb the r0 leg into the first digit core.
    {
        let c = &cores[0];
        let mut out = Core::zeros(r0, c.n, c.r1);
        for b in 0..c.r1 {
            for i in 0..c.n {
                for a in 0..r0 {
                    let mut s = 0.0;
                    for t in 0..c.r0 {
                        s += head.get(0, a, t) * c.get(t, i, b);
                    }
                    out.set(a, i, b, s);
                }
            }
        }
        cores[0] = out;
    }
    // Absorb the r1 leg into the last digit core.
    {
        let c = &cores[l - 1];
        let mut out = Core::zeros(c.r0, c.n, r1);
        for b in 0..r1 {
            for i in 0..c.n {
                for a in 0..c.r0 {
                    let mut s = 0.0;
                    for t in 0..c.r1 {
                        s += c.get(a, i, t) * tail.get(t, b, 0);
                    }
                    out.set(a, i, b, s);
                }
            }
        }
        cores[l - 1] = out;
    }
    Ok(cores)
}

fn digits_to_index(digits: &[usize], radices: &[usize]) -> usize {
    digits
        .iter()
        .zip(radices)
        .fold(0, |acc, (&d, &q)| acc * q + d)
}

pub fn quantize_vector(t: &TtVector, tol: f64) -> Result<QuantizedVector> {
    let factors = t
        .mode_sizes()
        .into_iter()
        .map(factor_mode)
        .collect::<Result<Vec<_>>>()?;
    let mut cores = Vec::new();
    for (core, f) in t.cores().iter().zip(&factors) {
        if f.radices.len() == 1 {
            cores.push(core.clone());
            continue;
        }
        cores.extend(split_core(core.r0, core.r1, &f.radices, |a, dg, b| {
            core.get(a, digits_to_index(dg, &f.radices), b)
        })?);
    }
    let train = tt_round(&TtVector::new(cores)?, tol, usize::MAX);
    Ok(QuantizedVector { train, factors })
}

pub fn quantize_matrix(t: &TtMatrix, tol: f64) -> Result<QuantizedMatrix> {
    let row_factors = t
        .row_sizes()
        .iter()
        .map(|&n| factor_mode(n))
        .collect::<Result<Vec<_>>>()?;
    let col_factors = t
        .col_sizes()
        .iter()
        .map(|&n| factor_mode(n))
        .collect::<Result<Vec<_>>>()?;
    let mut cores = Vec::new();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for k in 0..t.d() {
        let len = row_factors[k]
            .radices
            .len()
            .max(col_factors[k].radices.len());
        let pr = padded(&row_factors[k], len);
        let pc = padded(&col_factors[k], len);
        rows.extend_from_slice(&pr);
        cols.extend_from_slice(&pc);
        let core = t.train().core(k);
        if len == 1 {
            cores.push(core.clone());
            continue;
        }
        let m = t.row_sizes()[k];
        let sizes: Vec<usize> = pr.iter().zip(&pc).map(|(p, q)| p * q).collect();
        cores.extend(split_core(core.r0, core.r1, &sizes, |a, dg, b| {
            let ri: Vec<usize> = dg.iter().zip(&pr).map(|(&g, &p)| g % p).collect();
            let ci: Vec<usize> = dg.iter().zip(&pr).map(|(&g, &p)| g / p).collect();
            let i = digits_to_index(&ri, &pr);
            let j = digits_to_index(&ci, &pc);
            core.get(a, i + m * j, b)
        })?);
    }
    let op = tt_round(
        &TtMatrix::from_parts(rows, cols, TtVector::new(cores)?)?,
        tol,
        usize::MAX,
    );
    Ok(QuantizedMatrix {
        op,
        row_factors,
        col_factors,
    })
}

/// Contracts a run of digit cores back into one core, first digit slowest.
fn merge_cores(cores: &[Core]) -> Core {
    let mut acc = cores[0].clone();
    for c in &cores[1..] {
        let (r0, n0, q) = (acc.r0, acc.n, c.n);
        let mut out = Core::zeros(r0, n0 * q, c.r1);
        for b in 0..c.r1 {
            for i in 0..n0 {
                for g in 0..q {
                    for a in 0..r0 {
                        let mut s = 0.0;
                        for t in 0..acc.r1 {
                            s += acc.get(a, i, t) * c.get(t, g, b);
                        }
                        out.set(a, i * q + g, b, s);
                    }
                }
            }
        }
        acc = out;
    }
    acc
}

fn check_groups(mode_sizes: &[usize], groups: &[Vec<usize>]) -> Result<()> {
    let total: usize = groups.iter().map(|g| g.len()).sum();
    if total != mode_sizes.len() {
        return Err(mismatch(format!(
            "factorizations describe {total} quantized modes, train has {}",
            mode_sizes.len()
        )));
    }
    Ok(())
}

pub fn dequantize_vector(t: &TtVector, factors: &[ModeFactorization]) -> Result<TtVector> {
    let groups: Vec<Vec<usize>> = factors.iter().map(|f| f.radices.clone()).collect();
    let sizes = t.mode_sizes();
    check_groups(&sizes, &groups)?;
    let mut pos = 0;
    let mut cores = Vec::with_capacity(factors.len());
    for f in factors {
        let len = f.radices.len();
        if f.radices.iter().product::<usize>() != f.original_size {
            return Err(invalid(
                "factorization radices do not multiply to the mode size",
            ));
        }
        if sizes[pos..pos + len] != f.radices[..] {
            return Err(mismatch(format!(
                "quantized modes {:?} do not match radices {:?}",
                &sizes[pos..pos + len],
                f.radices
            )));
        }
        cores.push(merge_cores(&t.cores()[pos..pos + len]));
        pos += len;
    }
    TtVector::new(cores)
}

pub fn dequantize_matrix(
    t: &TtMatrix,
    row_factors: &[ModeFactorization],
    col_factors: &[ModeFactorization],
) -> Result<TtMatrix> {
    if row_factors.len() != col_factors.len() {
        return Err(mismatch("row and column factorization counts differ"));
    }
    let mut pos = 0;
    let mut cores = Vec::with_capacity(row_factors.len());
    for (fr, fc) in row_factors.iter().zip(col_factors) {
        let len = fr.radices.len().max(fc.radices.len());
        let pr = padded(fr, len);
        let pc = padded(fc, len);
        if pos + len > t.d()
            || t.row_sizes()[pos..pos + len] != pr[..]
            || t.col_sizes()[pos..pos + len] != pc[..]
        {
            return Err(mismatch(
                "quantized operator modes do not match the factorizations",
            ));
        }
        let merged = merge_cores(&t.train().cores()[pos..pos + len]);
        let (m, n) = (fr.original_size, fc.original_size);
        let sizes: Vec<usize> = pr.iter().zip(&pc).map(|(p, q)| p * q).collect();
        let mut out = Core::zeros(merged.r0, m * n, merged.r1);
        let mut digits = vec![0usize; len];
        for g in 0..merged.n {
            let mut rem = g;
            for l in (0..len).rev() {
                digits[l] = rem % sizes[l];
                rem /= sizes[l];
            }
            let ri: Vec<usize> = digits.iter().zip(&pr).map(|(&x, &p)| x % p).collect();
            let ci: Vec<usize> = digits.iter().zip(&pr).map(|(&x, &p)| x / p).collect();
            let i = digits_to_index(&ri, &pr);
            let j = digits_to_index(&ci, &pc);
            for b in 0..merged.r1 {
                for a in 0..merged.r0 {
                    out.set(a, i + m * j, b, merged.get(a, g, b));
                }
            }
        }
        cores.push(out);
        pos += len;
    }
    if pos != t.d() {
        return Err(mismatch("factorizations do not cover every quantized mode"));
    }
    TtMatrix::from_parts(
        row_factors.iter().map(|f| f.original_size).collect(),
        col_factors.iter().map(|f| f.original_size).collect(),
        TtVector::new(cores)?,
    )
}

/// Represented entries divided by stored core entries.
pub fn compression_ratio<T: Train>(t: &T) -> f64 {
    let train = t.as_train();
    train.full_size() / train.storage() as f64
}
