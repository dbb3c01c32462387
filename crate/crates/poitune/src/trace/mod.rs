//! In-memory trace container, metadata schema, file I/O, and preprocessing.
//!
//! A [`TraceSet`] couples an `n_traces x n_samples` sample matrix with
//! per-trace metadata records (plaintext, ciphertext, key, optional masks).
//! Sets are immutable after construction; transforms return new sets.

mod preprocess;
mod sctf;

pub use preprocess::{preprocess, PreprocessSpec};
pub use sctf::{read_sctf, write_sctf, SctfError};

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Metadata field name for the 16-byte plaintext.
pub const FIELD_PLAINTEXT: &str = "plaintext";
/// Metadata field name for the 16-byte ciphertext.
pub const FIELD_CIPHERTEXT: &str = "ciphertext";
/// Metadata field name for the 16-byte key.
pub const FIELD_KEY: &str = "key";
/// Metadata field name for the 1-byte Sbox input mask.
pub const FIELD_MASK_IN: &str = "mask_in";
/// Metadata field name for the 1-byte Sbox output mask.
pub const FIELD_MASK_OUT: &str = "mask_out";

/// Byte width a reserved field name must be declared with, if present.
fn reserved_width(name: &str) -> Option<u16> {
    match name {
        FIELD_PLAINTEXT | FIELD_CIPHERTEXT | FIELD_KEY => Some(16),
        FIELD_MASK_IN | FIELD_MASK_OUT => Some(1),
        _ => None,
    }
}

/// On-disk sample representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleEncoding {
    Int8,
    Float32,
}

/// One declared metadata field: a name and its fixed per-trace byte width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaField {
    pub name: String,
    pub width: u16,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("metadata buffer holds {got} bytes, expected {expected} (n_traces x record width)")]
    MetaSizeMismatch { expected: usize, got: usize },
    #[error("duplicate metadata field {0:?}")]
    DuplicateField(String),
    #[error("metadata field name {0:?} is not printable ASCII or is empty")]
    BadFieldName(String),
    #[error("metadata field name is {0} bytes long, maximum is 255")]
    FieldNameTooLong(usize),
    #[error("more than 255 metadata fields declared ({0})")]
    TooManyFields(usize),
    #[error("reserved field {name:?} declared with width {got}, expected {expected}")]
    ReservedFieldWidth { name: String, expected: u16, got: u16 },
    #[error("INT8 encoding requires whole sample values in -128..=127; trace {trace} sample {sample} is {value}")]
    Int8OutOfRange { trace: usize, sample: usize, value: f32 },
    #[error("metadata field {0:?} not present")]
    MissingField(String),
    #[error("lowpass window must be at least 1")]
    LowpassWindowZero,
    #[error("lowpass window {window} exceeds trace length {n_samples}")]
    LowpassWindowTooLarge { window: usize, n_samples: usize },
    #[error("split needs {requested} traces but the set has {available}")]
    SplitTooLarge { requested: usize, available: usize },
}

/// Immutable set of equally long traces plus fixed-width per-trace metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    samples: Array2<f32>,
    encoding: SampleEncoding,
    fields: Vec<MetaField>,
    meta: Vec<u8>,
}

impl TraceSet {
    /// Builds a set and verifies its invariants: metadata sized as
    /// `n_traces x record_width`, unique printable field names, reserved
    /// names carrying their canonical widths, and INT8 samples holding whole
    /// in-range values.
    pub fn new(
        samples: Array2<f32>,
        encoding: SampleEncoding,
        fields: Vec<MetaField>,
        meta: Vec<u8>,
    ) -> Result<Self, TraceError> {
        if fields.len() > 255 {
            return Err(TraceError::TooManyFields(fields.len()));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.name.is_empty() || !f.name.bytes().all(|b| (0x21..=0x7e).contains(&b)) {
                return Err(TraceError::BadFieldName(f.name.clone()));
            }
            if f.name.len() > 255 {
                return Err(TraceError::FieldNameTooLong(f.name.len()));
            }
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(TraceError::DuplicateField(f.name.clone()));
            }
            if let Some(expected) = reserved_width(&f.name) {
                if f.width != expected {
                    return Err(TraceError::ReservedFieldWidth {
                        name: f.name.clone(),
                        expected,
                        got: f.width,
                    });
                }
            }
        }
        let record_width: usize = fields.iter().map(|f| f.width as usize).sum();
        let expected = samples.nrows() * record_width;
        if meta.len() != expected {
            return Err(TraceError::MetaSizeMismatch {
                expected,
                got: meta.len(),
            });
        }
        if encoding == SampleEncoding::Int8 {
            for (i, row) in samples.outer_iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if v.fract() != 0.0 || !(-128.0..=127.0).contains(&v) {
                        return Err(TraceError::Int8OutOfRange {
                            trace: i,
                            sample: j,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(Self {
            samples,
            encoding,
            fields,
            meta,
        })
    }

    pub fn n_traces(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &Array2<f32> {
        &self.samples
    }

    pub fn trace(&self, i: usize) -> ArrayView1<'_, f32> {
        self.samples.row(i)
    }

    pub fn encoding(&self) -> SampleEncoding {
        self.encoding
    }

    pub fn fields(&self) -> &[MetaField] {
        &self.fields
    }

    /// Total metadata bytes per trace.
    pub fn record_width(&self) -> usize {
        self.fields.iter().map(|f| f.width as usize).sum()
    }

    /// Raw metadata record of one trace.
    pub fn record(&self, trace: usize) -> &[u8] {
        let w = self.record_width();
        &self.meta[trace * w..(trace + 1) * w]
    }

    /// Byte offset and width of a field within each record.
    pub fn field_span(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0usize;
        for f in &self.fields {
            if f.name == name {
                return Some((offset, f.width as usize));
            }
            offset += f.width as usize;
        }
        None
    }

    /// Bytes of one field for one trace.
    pub fn field_bytes(&self, trace: usize, name: &str) -> Result<&[u8], TraceError> {
        let (offset, width) = self
            .field_span(name)
            .ok_or_else(|| TraceError::MissingField(name.to_string()))?;
        let rec = self.record(trace);
        Ok(&rec[offset..offset + width])
    }

    /// Collects a 16-byte field (plaintext/ciphertext/key) across all traces.
    pub fn byte16_column(&self, name: &str) -> Result<Vec<[u8; 16]>, TraceError> {
        let (offset, width) = self
            .field_span(name)
            .ok_or_else(|| TraceError::MissingField(name.to_string()))?;
        debug_assert_eq!(width, 16, "reserved widths are checked at construction");
        let w = self.record_width();
        Ok((0..self.n_traces())
            .map(|i| {
                let mut out = [0u8; 16];
                out.copy_from_slice(&self.meta[i * w + offset..i * w + offset + 16]);
                out
            })
            .collect())
    }

    /// Collects a 1-byte field (mask_in/mask_out) across all traces.
    pub fn byte1_column(&self, name: &str) -> Result<Vec<u8>, TraceError> {
        let (offset, _) = self
            .field_span(name)
            .ok_or_else(|| TraceError::MissingField(name.to_string()))?;
        let w = self.record_width();
        Ok((0..self.n_traces()).map(|i| self.meta[i * w + offset]).collect())
    }

    /// New set holding the given traces, in the given order.
    pub fn select(&self, indices: &[usize]) -> TraceSet {
        let t = self.n_samples();
        let w = self.record_width();
        let mut samples = Array2::<f32>::zeros((indices.len(), t));
        let mut meta = Vec::with_capacity(indices.len() * w);
        for (out_row, &i) in indices.iter().enumerate() {
            samples.row_mut(out_row).assign(&self.samples.row(i));
            meta.extend_from_slice(&self.meta[i * w..(i + 1) * w]);
        }
        TraceSet {
            samples,
            encoding: self.encoding,
            fields: self.fields.clone(),
            meta,
        }
    }

    /// Disjoint profiling/attack partition, sampled uniformly without
    /// replacement; deterministic for a given seed.
    pub fn split(
        &self,
        n_profiling: usize,
        n_attack: usize,
        seed: u64,
    ) -> Result<(TraceSet, TraceSet), TraceError> {
        let total = n_profiling + n_attack;
        if total > self.n_traces() {
            return Err(TraceError::SplitTooLarge {
                requested: total,
                available: self.n_traces(),
            });
        }
        let mut indices: Vec<usize> = (0..self.n_traces()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let profiling = self.select(&indices[..n_profiling]);
        let attack = self.select(&indices[n_profiling..total]);
        Ok((profiling, attack))
    }

    /// Internal constructor for transforms that preserve the metadata layout.
    pub(crate) fn with_samples(&self, samples: Array2<f32>, encoding: SampleEncoding) -> TraceSet {
        debug_assert_eq!(samples.nrows(), self.n_traces());
        TraceSet {
            samples,
            encoding,
            fields: self.fields.clone(),
            meta: self.meta.clone(),
        }
    }

    pub(crate) fn meta_buf(&self) -> &[u8] {
        &self.meta
    }
}
