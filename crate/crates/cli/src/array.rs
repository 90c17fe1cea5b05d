//! Minimal bit-exact binary array format.
//!
//! Layout: magic `PRTK01` (6 bytes), dtype byte (0x01 real f64, 0x02 complex
//! f64 interleaved re,im), one reserved zero byte, rows and cols as u64 LE,
//! then the row-major little-endian payload. Header is 24 bytes total.

use crate::error::{CliError, Result};
use num_complex::Complex64;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 6] = b"PRTK01";
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum Array {
    Real { rows: usize, cols: usize, data: Vec<f64> },
    Complex { rows: usize, cols: usize, data: Vec<Complex64> },
}

impl Array {
    pub fn rows(&self) -> usize {
        match self {
            Array::Real { rows, .. } | Array::Complex { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Array::Real { cols, .. } | Array::Complex { cols, .. } => *cols,
        }
    }

    fn dtype_byte(&self) -> u8 {
        match self {
            Array::Real { .. } => 0x01,
            Array::Complex { .. } => 0x02,
        }
    }
}

pub fn write_array(path: &Path, array: &Array) -> Result<()> {
    let rows = array.rows() as u64;
    let cols = array.cols() as u64;
    let mut bytes = Vec::with_capacity(HEADER_LEN);
    bytes.extend_from_slice(MAGIC);
    bytes.push(array.dtype_byte());
    bytes.push(0); // reserved
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    match array {
        Array::Real { data, .. } => {
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Array::Complex { data, .. } => {
            for v in data {
                bytes.extend_from_slice(&v.re.to_le_bytes());
                bytes.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    atomic_write(path, &bytes)
}

/// Write via a temp file in the destination directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(CliError::io(format!("creating temp file for {}", path.display())))?;
    tmp.write_all(bytes)
        .map_err(CliError::io(format!("writing {}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<Array> {
    let bytes =
        std::fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    if bytes.len() < HEADER_LEN {
        return Err(CliError::Validation(format!(
            "{}: truncated header ({} bytes)",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[..6] != MAGIC {
        return Err(CliError::Validation(format!(
            "{}: bad magic, not a PRTK01 array",
            path.display()
        )));
    }
    let dtype = bytes[6];
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| CliError::Validation("array dimensions overflow".into()))?;
    let per_entry = match dtype {
        0x01 => 8,
        0x02 => 16,
        other => {
            return Err(CliError::Validation(format!(
                "{}: unknown dtype byte 0x{other:02x}",
                path.display()
            )))
        }
    };
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * per_entry {
        return Err(CliError::Validation(format!(
            "{}: payload is {} bytes, expected {}",
            path.display(),
            payload.len(),
            count * per_entry
        )));
    }
    let read_f64 = |i: usize| f64::from_le_bytes(payload[i * 8..i * 8 + 8].try_into().unwrap());
    let total_f64 = payload.len() / 8;
    for i in 0..total_f64 {
        if read_f64(i).is_nan() {
            return Err(CliError::Validation(format!(
                "{}: NaN in payload at scalar {i}",
                path.display()
            )));
        }
    }
    Ok(match dtype {
        0x01 => Array::Real {
            rows,
            cols,
            data: (0..count).map(read_f64).collect(),
        },
        _ => Array::Complex {
            rows,
            cols,
            data: (0..count)
                .map(|i| Complex64::new(read_f64(2 * i), read_f64(2 * i + 1)))
                .collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_complex_5x7_is_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.prtk");
        let data: Vec<Complex64> = (0..35)
            .map(|i| Complex64::new(i as f64 * 0.37 - 3.0, (i * i) as f64 * 1e-3))
            .collect();
        let arr = Array::Complex { rows: 5, cols: 7, data };
        write_array(&path, &arr).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(read_array(&path).unwrap(), arr);
        write_array(&path, &arr).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn real_4x4_file_is_152_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.prtk");
        let arr = Array::Real { rows: 4, cols: 4, data: vec![1.5; 16] };
        write_array(&path, &arr).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 152);
    }

    #[test]
    fn corrupt_magic_byte_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.prtk");
        let arr = Array::Real { rows: 2, cols: 2, data: vec![0.0; 4] };
        write_array(&path, &arr).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        let err = read_array(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn nan_payload_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.prtk");
        let arr = Array::Real { rows: 1, cols: 2, data: vec![1.0, f64::NAN] };
        write_array(&path, &arr).unwrap();
        assert!(read_array(&path).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.prtk");
        let arr = Array::Real { rows: 3, cols: 3, data: vec![2.0; 9] };
        write_array(&path, &arr).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(read_array(&path).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_any_shape(rows in 1usize..20, cols in 1usize..20, real in any::<bool>(), seed in any::<u64>()) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("p.prtk");
            let mut v = seed;
            let mut next = move || {
                v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (v >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let arr = if real {
                Array::Real { rows, cols, data: (0..rows * cols).map(|_| next()).collect() }
            } else {
                Array::Complex { rows, cols, data: (0..rows * cols).map(|_| Complex64::new(next(), next())).collect() }
            };
            write_array(&path, &arr).unwrap();
            prop_assert_eq!(read_array(&path).unwrap(), arr);
        }
    }
}
