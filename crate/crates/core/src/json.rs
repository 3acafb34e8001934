//! JSON wire formats.
//!
//! Complex entries are `[re, im]` pairs stored row-major. A plain complex
//! matrix carries explicit `rows`/`cols`; block vectors and block matrices
//! carry the block length `n` and block size `s` instead.

use serde::{Deserialize, Serialize};

use crate::dense::{c, CMat};
use crate::error::{Error, Result};
use crate::salgebra::UpperTriNonneg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

pub(crate) fn to_row_major(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push([z.re, z.im]);
        }
    }
    out
}

pub(crate) fn from_row_major(rows: usize, cols: usize, data: &[[f64; 2]]) -> Result<CMat> {
    if data.len() != rows * cols {
        return Err(Error::dims(format!(
            "expected {} entries for a {rows}x{cols} matrix, found {}",
            rows * cols,
            data.len()
        )));
    }
    if data.iter().any(|z| !z[0].is_finite() || !z[1].is_finite()) {
        return Err(Error::Invalid("non-finite matrix entry".into()));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let z = data[i * cols + j];
        c(z[0], z[1])
    }))
}

impl From<&CMat> for ComplexMatrixJson {
    fn from(m: &CMat) -> Self {
        ComplexMatrixJson { rows: m.nrows(), cols: m.ncols(), data: to_row_major(m) }
    }
}

impl ComplexMatrixJson {
    pub fn to_matrix(&self) -> Result<CMat> {
        from_row_major(self.rows, self.cols, &self.data)
    }
}

impl TryFrom<ComplexMatrixJson> for UpperTriNonneg {
    type Error = Error;

    fn try_from(value: ComplexMatrixJson) -> Result<Self> {
        UpperTriNonneg::new(value.to_matrix()?)
    }
}

impl From<UpperTriNonneg> for ComplexMatrixJson {
    fn from(value: UpperTriNonneg) -> Self {
        ComplexMatrixJson::from(value.as_mat())
    }
}

/// Serde adapter for a bare `CMat` field.
pub mod cmat {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ComplexMatrixJson::from(m).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<CMat, D::Error> {
        let j = ComplexMatrixJson::deserialize(de)?;
        j.to_matrix().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<CMat>`.
pub mod cmat_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[CMat], ser: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<ComplexMatrixJson> = ms.iter().map(ComplexMatrixJson::from).collect();
        v.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<CMat>, D::Error> {
        let v = Vec::<ComplexMatrixJson>::deserialize(de)?;
        v.iter().map(|j| j.to_matrix().map_err(serde::de::Error::custom)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockJson {
    pub n: usize,
    pub s: usize,
    pub data: Vec<[f64; 2]>,
}
