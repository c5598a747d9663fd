//! Text formats for sampled matrices and kernels.
//!
//! Matrix file:
//!
//! ```text
//! rows cols nnz
//! row col value        (one line per structural nonzero)
//! ```
//!
//! Kernel file:
//!
//! ```text
//! c_out c_in k nnz_mask
//! i j p q              (nnz_mask mask lines)
//! i j value            (one line per nonzero of the center matrix)
//! ```
//!
//! Indices are 0-based and ascending; values carry 17 significant digits
//! so that they parse back to the same `f64`.

use std::io::{BufRead, Write};

use ndarray::Array4;

use crate::conv::ConvKernel;
use crate::error::{Error, Result};
use crate::sampler::SparseOrthoMatrix;

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix<W: Write>(m: &SparseOrthoMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for (r, c, v) in m.entries() {
        writeln!(out, "{r} {c} {}", format_value(v))?;
    }
    Ok(())
}

pub fn write_kernel<W: Write>(k: &ConvKernel, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{} {} {} {}",
        k.c_out(),
        k.c_in(),
        k.half_width(),
        k.mask_population()
    )?;
    for ((i, j, p, q), &m) in k.mask().indexed_iter() {
        if m {
            writeln!(out, "{i} {j} {p} {q}")?;
        }
    }
    for (i, j, v) in k.center().entries() {
        writeln!(out, "{i} {j} {}", format_value(v))?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::iter::Enumerate<std::io::Lines<R>>,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Self {
            inner: reader.lines().enumerate(),
        }
    }

    /// Next non-blank line split into fields, with its 1-based number.
    fn next_fields(&mut self) -> Result<Option<(usize, Vec<String>)>> {
        for (idx, line) in self.inner.by_ref() {
            let line = line?;
            let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if !fields.is_empty() {
                return Ok(Some((idx + 1, fields)));
            }
        }
        Ok(None)
    }
}

fn parse<T: std::str::FromStr>(field: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse '{field}'")))
}

fn expect_len(fields: &[String], n: usize, line: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::Parse(format!(
            "line {line}: expected {n} fields, found {}",
            fields.len()
        )));
    }
    Ok(())
}

pub fn read_matrix<R: BufRead>(reader: R) -> Result<SparseOrthoMatrix> {
    let mut lines = Lines::new(reader);
    let (ln, header) = lines
        .next_fields()?
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    expect_len(&header, 3, ln)?;
    let rows: usize = parse(&header[0], ln)?;
    let cols: usize = parse(&header[1], ln)?;
    let nnz: usize = parse(&header[2], ln)?;
    let mut entries = Vec::with_capacity(nnz);
    while let Some((ln, f)) = lines.next_fields()? {
        expect_len(&f, 3, ln)?;
        entries.push((parse(&f[0], ln)?, parse(&f[1], ln)?, parse(&f[2], ln)?));
    }
    if entries.len() != nnz {
        return Err(Error::Parse(format!(
            "header declares {nnz} entries, found {}",
            entries.len()
        )));
    }
    SparseOrthoMatrix::from_triplets(rows, cols, entries)
}

pub fn read_kernel<R: BufRead>(reader: R) -> Result<ConvKernel> {
    let mut lines = Lines::new(reader);
    let (ln, header) = lines
        .next_fields()?
        .ok_or_else(|| Error::Parse("empty kernel file".into()))?;
    expect_len(&header, 4, ln)?;
    let c_out: usize = parse(&header[0], ln)?;
    let c_in: usize = parse(&header[1], ln)?;
    let k: usize = parse(&header[2], ln)?;
    let nnz_mask: usize = parse(&header[3], ln)?;
    let w = 2 * k + 1;
    let mut mask = Array4::from_elem((c_out, c_in, w, w), false);
    for _ in 0..nnz_mask {
        let (ln, f) = lines
            .next_fields()?
            .ok_or_else(|| Error::Parse("kernel file ends inside the mask".into()))?;
        expect_len(&f, 4, ln)?;
        let idx: [usize; 4] = [
            parse(&f[0], ln)?,
            parse(&f[1], ln)?,
            parse(&f[2], ln)?,
            parse(&f[3], ln)?,
        ];
        let slot = mask
            .get_mut(idx)
            .ok_or_else(|| Error::Parse(format!("line {ln}: mask index out of range")))?;
        *slot = true;
    }
    let mut entries = Vec::new();
    while let Some((ln, f)) = lines.next_fields()? {
        expect_len(&f, 3, ln)?;
        entries.push((parse(&f[0], ln)?, parse(&f[1], ln)?, parse(&f[2], ln)?));
    }
    let center = SparseOrthoMatrix::from_triplets(c_out, c_in, entries)?;
    ConvKernel::from_parts(k, center, mask)
}
