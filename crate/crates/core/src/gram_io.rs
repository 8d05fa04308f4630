//! Gram matrix file formats.
//!
//! CSV: a header row of shape ids followed by `m` rows of entries.
//!
//! Binary (little-endian): magic `GRAM1`, `dim` as u32, λ as f64, `m` as u64,
//! then `m²` row-major f64 entries. An unknown λ is stored as NaN and an
//! unknown dimension as 0.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rkhs::GramMatrix;

pub const GRAM_MAGIC: &[u8; 5] = b"GRAM1";
const HEADER_LEN: usize = 5 + 4 + 8 + 8;

impl GramMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer
            .write_record(self.shape_ids())
            .expect("writing to memory");
        out.push_str(&String::from_utf8(writer.into_inner().expect("flush")).expect("utf8"));
        for i in 0..self.size() {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                // shortest representation that round-trips exactly
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |line: usize, message: String| Error::Parse {
            source_name: "gram csv".into(),
            line,
            message,
        };
        let ids: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let m = ids.len();
        let mut entries = Vec::with_capacity(m * m);
        let mut rows = 0;
        for record in reader.records() {
            let record = record.map_err(|e| {
                parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != m {
                return Err(parse_err(
                    line,
                    format!("expected {m} columns, found {}", record.len()),
                ));
            }
            for field in record.iter() {
                entries.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| parse_err(line, format!("{field:?}: {e}")))?,
                );
            }
            rows += 1;
        }
        if rows != m {
            return Err(parse_err(rows + 1, format!("expected {m} rows, found {rows}")));
        }
        GramMatrix::from_entries(m, entries)?.with_shape_ids(ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.entries().len());
        out.extend_from_slice(GRAM_MAGIC);
        out.extend_from_slice(&(self.dim().unwrap_or(0) as u32).to_le_bytes());
        out.extend_from_slice(&self.lambda().unwrap_or(f64::NAN).to_le_bytes());
        out.extend_from_slice(&(self.size() as u64).to_le_bytes());
        for v in self.entries() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            source_name: "gram binary".into(),
            line: 0,
            message,
        };
        if bytes.len() < HEADER_LEN || &bytes[..5] != GRAM_MAGIC {
            return Err(bad("missing GRAM1 header".into()));
        }
        let dim = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let lambda = f64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let m = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        let body = &bytes[HEADER_LEN..];
        let expected = m
            .checked_mul(m)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| bad(format!("matrix size {m} overflows")))?;
        if body.len() != expected {
            return Err(bad(format!(
                "expected {expected} payload bytes for m={m}, found {}",
                body.len()
            )));
        }
        let entries = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut g = GramMatrix::from_entries(m, entries)?;
        if dim != 0 && !lambda.is_nan() {
            g = g.with_kernel(lambda, dim);
        }
        Ok(g)
    }
}
