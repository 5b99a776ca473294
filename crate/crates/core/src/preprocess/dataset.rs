//! In-memory window dataset and the `HODW` binary record stream.
//!
//! Layout, little-endian:
//!
//! | field        | type      |
//! |--------------|-----------|
//! | magic        | `b"HODW"` |
//! | version      | u16 (1)   |
//! | window width | u16       |
//! | record count | u64       |
//! | records      | `width` × f32, then u8 label (1 = hands-on) |

use std::io::{Read, Write};

use crate::error::{HodError, Result};
use crate::preprocess::Window;
use crate::sim::Label;

pub const HODW_MAGIC: &[u8; 4] = b"HODW";
pub const HODW_VERSION: u16 = 1;
const HODW_HEADER_LEN: usize = 16;

/// Row-major windows with one label per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    width: usize,
    features: Vec<f32>,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(width: usize) -> Self {
        Dataset {
            width,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_windows(width: usize, windows: &[Window]) -> Result<Self> {
        let mut ds = Dataset::new(width);
        for w in windows {
            if w.values.len() != width {
                return Err(HodError::Dimension {
                    expected: width,
                    actual: w.values.len(),
                });
            }
            ds.features.extend_from_slice(&w.values);
            ds.labels.push(w.label);
        }
        Ok(ds)
    }

    pub fn reserve(&mut self, rows: usize) {
        self.features.reserve(rows * self.width);
        self.labels.reserve(rows);
    }

    pub fn push(&mut self, row: &[f32], label: Label) {
        assert_eq!(row.len(), self.width, "row width");
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    pub fn push_f64(&mut self, row: &[f64], label: Label) {
        assert_eq!(row.len(), self.width, "row width");
        self.features.extend(row.iter().map(|&v| v as f32));
        self.labels.push(label);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_on()).count()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut ds = Dataset::new(self.width);
        ds.reserve(indices.len());
        for &i in indices {
            ds.push(self.row(i), self.labels[i]);
        }
        ds
    }

    pub fn append(&mut self, other: &Dataset) -> Result<()> {
        if other.width != self.width {
            return Err(HodError::Dimension {
                expected: self.width,
                actual: other.width,
            });
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn window(&self, i: usize) -> Window {
        Window {
            values: self.row(i).to_vec(),
            label: self.labels[i],
            source_index: i,
        }
    }
}

pub fn write_hodw<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let width = u16::try_from(ds.width)
        .map_err(|_| HodError::InvalidInput(format!("window width {} exceeds u16", ds.width)))?;
    out.write_all(HODW_MAGIC)?;
    out.write_all(&HODW_VERSION.to_le_bytes())?;
    out.write_all(&width.to_le_bytes())?;
    out.write_all(&(ds.len() as u64).to_le_bytes())?;
    let mut record = Vec::with_capacity(ds.width * 4 + 1);
    for i in 0..ds.len() {
        record.clear();
        for v in ds.row(i) {
            record.extend_from_slice(&v.to_le_bytes());
        }
        record.push(u8::from(ds.labels[i].is_on()));
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_hodw<R: Read>(mut input: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse_hodw(&bytes)
}

/// Decodes a complete `HODW` buffer. Trailing bytes are an error.
pub fn parse_hodw(bytes: &[u8]) -> Result<Dataset> {
    let bad = |r: String| HodError::format("HODW dataset", r);
    if bytes.len() < HODW_HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != HODW_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != HODW_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if width == 0 {
        return Err(bad("zero window width".into()));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let record_len = width * 4 + 1;
    let body = &bytes[HODW_HEADER_LEN..];
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(record_len))
        .ok_or_else(|| bad(format!("record count {count} overflows")))?;
    if body.len() != expected {
        return Err(bad(format!(
            "{count} records of {record_len} bytes need {expected} bytes, found {}",
            body.len()
        )));
    }
    let mut ds = Dataset::new(width);
    ds.reserve(count as usize);
    for (r, rec) in body.chunks_exact(record_len).enumerate() {
        for chunk in rec[..width * 4].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(bad(format!("record {r} has a non-finite value")));
            }
            ds.features.push(v);
        }
        ds.labels.push(match rec[width * 4] {
            0 => Label::HandsOff,
            1 => Label::HandsOn,
            b => return Err(bad(format!("record {r} has label byte {b}"))),
        });
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut ds = Dataset::new(2);
        ds.push(&[1.0, -0.5], Label::HandsOn);
        let mut buf = Vec::new();
        write_hodw(&ds, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"HODW");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[2, 0]);
        assert_eq!(&buf[8..16], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&buf[16..20], &1.0f32.to_le_bytes());
        assert_eq!(buf[24], 1);
        assert_eq!(buf.len(), 16 + 9);
    }

    #[test]
    fn rejects_corrupt_buffers() {
        let mut ds = Dataset::new(3);
        ds.push(&[0.1, 0.2, 0.3], Label::HandsOff);
        let mut good = Vec::new();
        write_hodw(&ds, &mut good).unwrap();
        assert!(parse_hodw(&good).is_ok());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(parse_hodw(&trailing).is_err());
        assert!(parse_hodw(&good[..good.len() - 1]).is_err());
        let mut label = good.clone();
        *label.last_mut().unwrap() = 7;
        assert!(parse_hodw(&label).is_err());
        let mut huge = good.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(parse_hodw(&huge).is_err());
        let mut nan = good.clone();
        nan[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(parse_hodw(&nan).is_err());
        assert!(parse_hodw(b"HODX").is_err());
    }

    proptest! {
        #[test]
        fn hodw_round_trip(rows in prop::collection::vec((prop::collection::vec(-1.0f32..1.0, 7), any::<bool>()), 0..40)) {
            let mut ds = Dataset::new(7);
            for (r, on) in &rows {
                ds.push(r, Label::from_on(*on));
            }
            let mut buf = Vec::new();
            write_hodw(&ds, &mut buf).unwrap();
            prop_assert_eq!(parse_hodw(&buf).unwrap(), ds);
        }
    }
}
