use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ReprMatrix, RowMeta};
use crate::{Error, Result};

pub const REPM_MAGIC: &[u8; 4] = b"REPM";
pub const REPM_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Encodes the binary part: magic, version, n, d, then row-major
/// little-endian f32 values.
pub fn encode_repm(n: usize, d: usize, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + values.len() * 4);
    out.extend_from_slice(REPM_MAGIC);
    out.extend_from_slice(&REPM_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes the binary part into `(n, d, values)`.
pub fn decode_repm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file of {} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != REPM_MAGIC {
        return Err(Error::Format("bad magic, expected `REPM`".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != REPM_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    if n.checked_mul(d).and_then(|c| c.checked_mul(4)) != Some(payload.len() as u64) {
        return Err(Error::Format(format!(
            "{n} x {d} header does not match a payload of {} bytes",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((n as usize, d as usize, values))
}

#[derive(Serialize, Deserialize)]
struct MetaRow {
    row_index: usize,
    example_id: String,
    token_index: usize,
    token_text: String,
    in_answer_span: u8,
    language: String,
}

/// Reads the metadata TSV (header row; `in_answer_span` is 0 or 1; rows in
/// `row_index` order).
pub fn read_metadata(bytes: &[u8]) -> Result<Vec<RowMeta>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(bytes);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let line = i + 2;
        let row: MetaRow = row.map_err(|e| Error::Line {
            line,
            message: e.to_string(),
        })?;
        if row.row_index != i {
            return Err(Error::Line {
                line,
                message: format!("row_index {} out of order, expected {i}", row.row_index),
            });
        }
        let in_answer_span = match row.in_answer_span {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Line {
                    line,
                    message: format!("in_answer_span must be 0 or 1, found {other}"),
                })
            }
        };
        out.push(RowMeta {
            example_id: row.example_id,
            token_index: row.token_index,
            token_text: row.token_text,
            in_answer_span,
            language: row.language,
        });
    }
    Ok(out)
}

pub fn write_metadata(meta: &[RowMeta]) -> Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    if meta.is_empty() {
        writer.write_record([
            "row_index",
            "example_id",
            "token_index",
            "token_text",
            "in_answer_span",
            "language",
        ])?;
    }
    for (i, m) in meta.iter().enumerate() {
        writer.serialize(MetaRow {
            row_index: i,
            example_id: m.example_id.clone(),
            token_index: m.token_index,
            token_text: m.token_text.clone(),
            in_answer_span: u8::from(m.in_answer_span),
            language: m.language.clone(),
        })?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn load_representations(repm: &[u8], metadata_tsv: &[u8]) -> Result<ReprMatrix> {
    let (n, d, values) = decode_repm(repm)?;
    let meta = read_metadata(metadata_tsv)?;
    ReprMatrix::new(n, d, values, meta)
}

/// Returns the binary file and its metadata sidecar.
pub fn store_representations(m: &ReprMatrix) -> Result<(Vec<u8>, Vec<u8>)> {
    Ok((encode_repm(m.n, m.d, &m.values), write_metadata(&m.meta)?))
}

/// Default sidecar location: the representation path with a `.tsv` extension.
pub fn sidecar_path(repm: &Path) -> PathBuf {
    repm.with_extension("tsv")
}
