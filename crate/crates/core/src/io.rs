//! Tensor file formats shared with the CLI.
//!
//! Two interchangeable on-disk representations:
//!
//! * a text "COO" CSV with header `i,j,k,value`, 1-based indices, where any
//!   entry not listed is zero and the dimensions are the largest index seen
//!   per mode;
//! * a dense binary format: the magic bytes `T3D1`, three little-endian u64
//!   dimensions, then all entries as little-endian f64 in canonical storage
//!   order (last index fastest).
//!
//! [`read_tensor`] sniffs the magic bytes and dispatches.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Leading bytes of the dense binary format.
pub const BINARY_MAGIC: [u8; 4] = *b"T3D1";

const CSV_HEADER: &str = "i,j,k,value";

/// Read a tensor from a file in either supported format.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path)?;
    let mut head = [0u8; 4];
    let got = read_up_to(&mut file, &mut head)?;
    if got == 4 && head == BINARY_MAGIC {
        return read_binary_body(file);
    }
    let chained = std::io::Cursor::new(head[..got].to_vec()).chain(file);
    read_tensor_csv(BufReader::new(chained))
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

/// Parse the COO CSV format. Duplicate entries and 0 indices are rejected;
/// the dimensions are inferred from the largest index per mode.
pub fn read_tensor_csv(reader: impl BufRead) -> Result<Tensor3> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Parse("empty tensor file".into())),
        }
    };
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!(
            "expected header `{CSV_HEADER}`, got `{}`",
            header.trim()
        )));
    }
    let mut entries: Vec<([usize; 3], f64)> = Vec::new();
    let mut seen: HashSet<[usize; 3]> = HashSet::new();
    let mut dims = [0usize; 3];
    // Header was line 1; data starts at line 2.
    for (lineno, line) in lines.enumerate().map(|(n, l)| (n + 2, l)) {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "line {lineno}: expected 4 comma-separated fields, got {}",
                fields.len()
            )));
        }
        let mut idx = [0usize; 3];
        for (m, field) in fields[..3].iter().enumerate() {
            let one_based: usize = field.parse().map_err(|_| {
                Error::Parse(format!("line {lineno}: bad index `{field}`"))
            })?;
            if one_based == 0 {
                return Err(Error::Parse(format!(
                    "line {lineno}: indices are 1-based, got 0"
                )));
            }
            idx[m] = one_based - 1;
            dims[m] = dims[m].max(one_based);
        }
        let value: f64 = fields[3].parse().map_err(|_| {
            Error::Parse(format!("line {lineno}: bad value `{}`", fields[3]))
        })?;
        if !seen.insert(idx) {
            return Err(Error::Parse(format!(
                "line {lineno}: duplicate entry ({}, {}, {})",
                idx[0] + 1,
                idx[1] + 1,
                idx[2] + 1
            )));
        }
        entries.push((idx, value));
    }
    if entries.is_empty() {
        return Err(Error::Parse("tensor file lists no entries".into()));
    }
    let mut t = Array3::<f64>::zeros((dims[0], dims[1], dims[2]));
    for (idx, value) in entries {
        t[idx] = value;
    }
    Ok(t)
}

/// Write every entry (zeros included, so dimensions survive a round trip)
/// in the COO CSV format.
pub fn write_tensor_csv(mut writer: impl Write, t: &Tensor3) -> Result<()> {
    writeln!(writer, "{CSV_HEADER}")?;
    for ((i, j, k), v) in t.indexed_iter() {
        writeln!(writer, "{},{},{},{}", i + 1, j + 1, k + 1, v)?;
    }
    Ok(())
}

/// Parse the dense binary format, magic bytes included.
pub fn read_tensor_binary(mut reader: impl Read) -> Result<Tensor3> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::Parse("missing magic bytes".into()))?;
    if magic != BINARY_MAGIC {
        return Err(Error::Parse(format!(
            "bad magic bytes {magic:?}, expected {BINARY_MAGIC:?}"
        )));
    }
    read_binary_body(reader)
}

fn read_binary_body(mut reader: impl Read) -> Result<Tensor3> {
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut buf = [0u8; 8];
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::Parse("truncated dimension header".into()))?;
        let v = u64::from_le_bytes(buf);
        *d = usize::try_from(v)
            .map_err(|_| Error::Parse(format!("dimension {v} does not fit in memory")))?;
        if *d == 0 {
            return Err(Error::Parse("zero dimension in binary header".into()));
        }
    }
    let len = dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(dims[2]))
        .ok_or_else(|| Error::Parse("dimension product overflows".into()))?;
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::Parse("truncated payload".into()))?;
        data.push(f64::from_le_bytes(buf));
    }
    let mut probe = [0u8; 1];
    if reader.read(&mut probe)? != 0 {
        return Err(Error::Parse("trailing bytes after payload".into()));
    }
    Array3::from_shape_vec((dims[0], dims[1], dims[2]), data)
        .map_err(|e| Error::Parse(format!("shape error: {e}")))
}

/// Write the dense binary format.
pub fn write_tensor_binary(mut writer: impl Write, t: &Tensor3) -> Result<()> {
    writer.write_all(&BINARY_MAGIC)?;
    let (p0, p1, p2) = t.dim();
    for d in [p0, p1, p2] {
        writer.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.iter() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Write a matrix as plain CSV rows with round-trippable float formatting.
pub fn write_matrix_csv(mut writer: impl Write, m: &ArrayView2<f64>) -> Result<()> {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}
