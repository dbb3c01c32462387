//! SCTF: a minimal open binary container for trace sets.
//!
//! Layout, all integers little-endian, no padding or compression:
//!
//! ```text
//! magic           4 bytes  "SCTF"
//! version         u32      currently 1
//! n_traces        u64
//! n_samples       u32
//! sample_encoding u8       0 = INT8, 1 = FLOAT32 (IEEE-754)
//! field_count     u8
//! per field:      name_len u8, name (ASCII), field_width_bytes u16
//! records         n_traces x (metadata fields in declared order, then samples)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::{reserved_width, MetaField, SampleEncoding, TraceError, TraceSet};

const MAGIC: [u8; 4] = *b"SCTF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SctfError {
    #[error("not an SCTF file (magic {found:02x?})")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported SCTF version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("unknown sample encoding tag {0}")]
    BadEncoding(u8),
    #[error("file ends inside the header")]
    TruncatedHeader,
    #[error("file ends inside record {record} ({got} of {expected} record bytes present)")]
    TruncatedRecord {
        record: u64,
        expected: usize,
        got: usize,
    },
    #[error("{0} unexpected bytes after the last record")]
    TrailingData(usize),
    #[error("field {field:?} declared with width {got}, this format fixes it at {expected}")]
    WidthMismatch {
        field: String,
        expected: u16,
        got: u16,
    },
    #[error("metadata field name is {0} bytes, the format limit is 255")]
    NameTooLong(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("loaded data violates trace-set invariants: {0}")]
    Invalid(#[from] TraceError),
}

/// Serializes a trace set; `read_sctf` on the result reproduces it exactly.
pub fn write_sctf(ts: &TraceSet, path: &Path) -> Result<(), SctfError> {
    for f in ts.fields() {
        if f.name.len() > 255 {
            return Err(SctfError::NameTooLong(f.name.len()));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(ts.n_traces() as u64).to_le_bytes())?;
    w.write_all(&(ts.n_samples() as u32).to_le_bytes())?;
    let enc: u8 = match ts.encoding() {
        SampleEncoding::Int8 => 0,
        SampleEncoding::Float32 => 1,
    };
    w.write_all(&[enc, ts.fields().len() as u8])?;
    for f in ts.fields() {
        w.write_all(&[f.name.len() as u8])?;
        w.write_all(f.name.as_bytes())?;
        w.write_all(&f.width.to_le_bytes())?;
    }
    let width = ts.record_width();
    for i in 0..ts.n_traces() {
        w.write_all(&ts.meta_buf()[i * width..(i + 1) * width])?;
        match ts.encoding() {
            SampleEncoding::Int8 => {
                for &v in ts.trace(i) {
                    w.write_all(&[(v as i8) as u8])?;
                }
            }
            SampleEncoding::Float32 => {
                for &v in ts.trace(i) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a trace set, verifying the header, reserved field widths, record
/// sizes, and the container invariants.
pub fn read_sctf(path: &Path) -> Result<TraceSet, SctfError> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    parse_sctf(&buf)
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], SctfError> {
    let end = pos.checked_add(n).ok_or(SctfError::TruncatedHeader)?;
    if end > buf.len() {
        return Err(SctfError::TruncatedHeader);
    }
    let out = &buf[*pos..end];
    *pos = end;
    Ok(out)
}

fn parse_sctf(buf: &[u8]) -> Result<TraceSet, SctfError> {
    let mut pos = 0usize;

    let magic = take(buf, &mut pos, 4)?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(SctfError::BadMagic { found });
    }
    let version = u32::from_le_bytes(take(buf, &mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(SctfError::UnsupportedVersion(version));
    }
    let n_traces = u64::from_le_bytes(take(buf, &mut pos, 8)?.try_into().unwrap());
    let n_samples = u32::from_le_bytes(take(buf, &mut pos, 4)?.try_into().unwrap()) as usize;
    let enc_tag = take(buf, &mut pos, 1)?[0];
    let encoding = match enc_tag {
        0 => SampleEncoding::Int8,
        1 => SampleEncoding::Float32,
        other => return Err(SctfError::BadEncoding(other)),
    };
    let field_count = take(buf, &mut pos, 1)?[0] as usize;
    let mut fields = Vec::with_capacity(field_count);
    for _ in 0..field_count {
        let name_len = take(buf, &mut pos, 1)?[0] as usize;
        let name_bytes = take(buf, &mut pos, name_len)?;
        let name = String::from_utf8_lossy(name_bytes).into_owned();
        let width = u16::from_le_bytes(take(buf, &mut pos, 2)?.try_into().unwrap());
        if let Some(expected) = reserved_width(&name) {
            if width != expected {
                return Err(SctfError::WidthMismatch {
                    field: name,
                    expected,
                    got: width,
                });
            }
        }
        fields.push(MetaField { name, width });
    }

    let record_width: usize = fields.iter().map(|f| f.width as usize).sum();
    let sample_bytes = match encoding {
        SampleEncoding::Int8 => 1,
        SampleEncoding::Float32 => 4,
    };
    let record_bytes = record_width + n_samples * sample_bytes;
    let remaining = buf.len() - pos;
    let expected_total = (n_traces as u128) * (record_bytes as u128);
    if (remaining as u128) < expected_total {
        let full_records = remaining.checked_div(record_bytes).unwrap_or(0) as u64;
        return Err(SctfError::TruncatedRecord {
            record: full_records,
            expected: record_bytes,
            got: remaining - full_records as usize * record_bytes,
        });
    }
    if (remaining as u128) > expected_total {
        return Err(SctfError::TrailingData(remaining - expected_total as usize));
    }

    let n_traces = n_traces as usize;
    let mut meta = Vec::with_capacity(n_traces * record_width);
    let mut samples = Array2::<f32>::zeros((n_traces, n_samples));
    for i in 0..n_traces {
        meta.extend_from_slice(take(buf, &mut pos, record_width)?);
        let raw = take(buf, &mut pos, n_samples * sample_bytes)?;
        let mut row = samples.row_mut(i);
        match encoding {
            SampleEncoding::Int8 => {
                for (j, &b) in raw.iter().enumerate() {
                    row[j] = (b as i8) as f32;
                }
            }
            SampleEncoding::Float32 => {
                for j in 0..n_samples {
                    row[j] = f32::from_le_bytes(raw[j * 4..j * 4 + 4].try_into().unwrap());
                }
            }
        }
    }
    Ok(TraceSet::new(samples, encoding, fields, meta)?)
}
