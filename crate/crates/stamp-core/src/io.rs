//! Tensor file ingestion/emission and CSV output.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic   4 bytes  "STMP"
//! version u32      1
//! ndim    u32      2 or 3
//! dims    u64 each (ndim of them; 3D order is sample x sequence x feature)
//! payload f32      row-major, product(dims) values
//! ```
//!
//! Values are stored as f32 on disk and widened to f64 in memory. CSV output
//! uses '.' decimals, '\n' line endings, a header row, and floats printed
//! with 17 significant digits; the +inf SQNR sentinel serializes as `inf`.

use std::fs;
use std::path::Path;

use crate::error::{Result, StampError};
use crate::tensor::ActivationMatrix;

pub const TENSOR_MAGIC: [u8; 4] = *b"STMP";
pub const TENSOR_VERSION: u32 = 1;

/// Serialize a batch as an ndim=3 tensor file.
pub fn write_tensor(path: &Path, batch: &[ActivationMatrix]) -> Result<()> {
    let first = batch
        .first()
        .ok_or_else(|| StampError::Data("empty batch".into()))?;
    let (s, d) = (first.rows(), first.cols());
    if batch.iter().any(|x| x.rows() != s || x.cols() != d) {
        return Err(StampError::Dimension(
            "batch samples differ in shape".into(),
        ));
    }
    let mut bytes = header_bytes(&[batch.len() as u64, s as u64, d as u64]);
    for x in batch {
        push_payload(&mut bytes, x)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Serialize a single matrix as an ndim=2 tensor file.
pub fn write_matrix(path: &Path, x: &ActivationMatrix) -> Result<()> {
    let mut bytes = header_bytes(&[x.rows() as u64, x.cols() as u64]);
    push_payload(&mut bytes, x)?;
    fs::write(path, bytes)?;
    Ok(())
}

fn header_bytes(dims: &[u64]) -> Vec<u8> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&TENSOR_MAGIC);
    bytes.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &dim in dims {
        bytes.extend_from_slice(&dim.to_le_bytes());
    }
    bytes
}

fn push_payload(bytes: &mut Vec<u8>, x: &ActivationMatrix) -> Result<()> {
    for &v in x.data() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(StampError::Data(format!(
                "value {v} does not fit in the f32 payload"
            )));
        }
        bytes.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(())
}

/// Read a tensor file: an ndim=2 file yields one matrix, ndim=3 a batch.
pub fn read_tensor(path: &Path) -> Result<Vec<ActivationMatrix>> {
    let bytes = fs::read(path).map_err(|e| StampError::Io(format!("{}: {e}", path.display())))?;
    parse_tensor(&bytes)
}

fn parse_tensor(bytes: &[u8]) -> Result<Vec<ActivationMatrix>> {
    let take = |offset: usize, n: usize| -> Result<&[u8]> {
        bytes.get(offset..offset + n).ok_or_else(|| {
            StampError::Io(format!(
                "truncated header: expected {} bytes, found {}",
                offset + n,
                bytes.len()
            ))
        })
    };
    let magic = take(0, 4)?;
    if magic != TENSOR_MAGIC {
        return Err(StampError::Io(format!(
            "bad magic {magic:02x?} at byte 0, expected \"STMP\""
        )));
    }
    let version = u32::from_le_bytes(take(4, 4)?.try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(StampError::Io(format!(
            "unsupported version {version} at byte 4"
        )));
    }
    let ndim = u32::from_le_bytes(take(8, 4)?.try_into().unwrap());
    if !(ndim == 2 || ndim == 3) {
        return Err(StampError::Io(format!(
            "ndim {ndim} at byte 8 not in {{2,3}}"
        )));
    }
    let mut dims = Vec::new();
    for k in 0..ndim as usize {
        let raw = u64::from_le_bytes(take(12 + 8 * k, 8)?.try_into().unwrap());
        dims.push(usize::try_from(raw).map_err(|_| {
            StampError::Io(format!(
                "dimension {raw} at byte {} is too large",
                12 + 8 * k
            ))
        })?);
    }
    let payload_start = 12 + 8 * ndim as usize;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| StampError::Io("dimension product overflows".into()))?;
    let expected = count * 4;
    let payload = &bytes[payload_start..];
    if payload.len() != expected {
        return Err(StampError::Io(format!(
            "truncated payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }

    let (samples, s, d) = match dims.as_slice() {
        [s, d] => (1, *s, *d),
        [n, s, d] => (*n, *s, *d),
        _ => unreachable!(),
    };
    let mut batch = Vec::with_capacity(samples);
    for n in 0..samples {
        let mut data = Vec::with_capacity(s * d);
        for k in 0..s * d {
            let at = (n * s * d + k) * 4;
            let v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(StampError::Io(format!(
                    "non-finite value {v} at byte {}",
                    payload_start + at
                )));
            }
            data.push(v as f64);
        }
        batch.push(ActivationMatrix::from_vec(s, d, data)?);
    }
    Ok(batch)
}

/// Float formatting shared by every CSV column: 17 significant digits,
/// `inf` for the +inf sentinel.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// In-memory CSV table with a fixed header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "row width mismatch");
        self.rows.push(cells);
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())
            .map_err(|e| StampError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::CounterRng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("stamp-io-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn two_by_two_layout_is_pinned() {
        let x = ActivationMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let path = tmp("layout.stmp");
        write_matrix(&path, &x).unwrap();
        let bytes = fs::read(&path).unwrap();
        let mut want = vec![];
        want.extend_from_slice(b"STMP");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u32.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            want.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, want);

        let back = read_tensor(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let x = ActivationMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let path = tmp("truncated.stmp");
        write_matrix(&path, &x).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(err.contains("expected 16 bytes, found 13"), "{err}");
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let x = ActivationMatrix::zeros(1, 1);
        let path = tmp("magic.stmp");
        write_matrix(&path, &x).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        assert!(parse_tensor(&bytes).is_err());
        bytes[0] = b'S';
        bytes[4] = 9;
        assert!(parse_tensor(&bytes).is_err());
    }

    #[test]
    fn non_finite_payload_names_byte_offset() {
        let x = ActivationMatrix::zeros(1, 2);
        let path = tmp("naninf.stmp");
        write_matrix(&path, &x).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let payload_start = bytes.len() - 8;
        bytes[payload_start + 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        let err = parse_tensor(&bytes).unwrap_err().to_string();
        assert!(
            err.contains(&format!("byte {}", payload_start + 4)),
            "{err}"
        );
    }

    #[test]
    fn batch_roundtrip_is_f32_exact() {
        let rng = CounterRng::new(77);
        let batch: Vec<ActivationMatrix> = (0..3)
            .map(|n| {
                ActivationMatrix::from_fn(4, 5, |i, j| rng.normal((n * 20 + i * 5 + j) as u64))
                    .unwrap()
            })
            .collect();
        let path = tmp("batch.stmp");
        write_tensor(&path, &batch).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (orig, got) in batch.iter().zip(&back) {
            for (o, g) in orig.data().iter().zip(got.data()) {
                assert_eq!(*g, *o as f32 as f64);
            }
        }
        // Writing the read-back batch reproduces the file byte-for-byte.
        let path2 = tmp("batch2.stmp");
        write_tensor(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn values_too_large_for_f32_are_rejected() {
        let x = ActivationMatrix::from_vec(1, 1, vec![1e300]).unwrap();
        assert!(write_matrix(&tmp("overflow.stmp"), &x).is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = CsvTable::new(&["a", "b"]);
        assert_eq!(t.to_csv_string(), "a,b\n");
    }

    #[test]
    fn float_formatting_is_fixed_width_and_inf() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(-0.03125), "-3.1250000000000000e-2");
        // 17 significant digits round-trip f64 exactly.
        let v = std::f64::consts::PI;
        let parsed: f64 = fmt_f64(v).parse().unwrap();
        assert_eq!(parsed, v);
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let mut t = CsvTable::new(&["x", "y"]);
        t.push_row(vec!["1".into(), fmt_f64(0.5)]);
        let s = t.to_csv_string();
        assert_eq!(s, "x,y\n1,5.0000000000000000e-1\n");
        assert!(!s.contains('\r'));
    }
}
