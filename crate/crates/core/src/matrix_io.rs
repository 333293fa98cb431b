//! Plain-text JSON format for dense complex matrices:
//!
//! ```json
//! { "rows": 2, "cols": 2, "data": [[0.5, 0.0], [0.0, 0.1], [0.0, -0.1], [0.5, 0.0]] }
//! ```
//!
//! `data` holds `rows × cols` `[re, im]` pairs in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GhdoError, Result};
use crate::linalg::CMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixFile {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(GhdoError::Input(format!(
                "matrix file declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        let values = self.data.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        Array2::from_shape_vec((self.rows, self.cols), values)
            .map_err(|e| GhdoError::Input(e.to_string()))
    }
}

pub fn write_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    fs::write(path, serde_json::to_string(&MatrixFile::from_matrix(m))?)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    let file: MatrixFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.to_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let m = Array2::from_shape_fn((2, 3), |(i, j)| Complex64::new(i as f64, j as f64));
        let f = MatrixFile::from_matrix(&m);
        assert_eq!(f.data[1], [0.0, 1.0]);
        assert_eq!(f.data[3], [1.0, 0.0]);
        assert_eq!(f.to_matrix().unwrap(), m);
    }

    #[test]
    fn size_mismatch_rejected() {
        let f = MatrixFile {
            rows: 2,
            cols: 2,
            data: vec![[1.0, 0.0]],
        };
        assert!(f.to_matrix().is_err());
    }
}
