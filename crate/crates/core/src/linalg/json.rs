//! Matrix JSON: `{"dim": d, "entries": [[re, im], ...]}`, row-major.

use serde::{Deserialize, Serialize};

use super::{CMatrix, C64};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        MatrixJson {
            dim: m.nrows(),
            entries,
        }
    }
}

impl From<CMatrix> for MatrixJson {
    fn from(m: CMatrix) -> Self {
        MatrixJson::from(&m)
    }
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<CMatrix> {
        if j.dim == 0 {
            return Err(Error::DimensionMismatch("dim must be positive".into()));
        }
        if j.entries.len() != j.dim * j.dim {
            return Err(Error::DimensionMismatch(format!(
                "dim {} requires {} entries, got {}",
                j.dim,
                j.dim * j.dim,
                j.entries.len()
            )));
        }
        if j.entries.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let data: Vec<C64> = j.entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        Ok(CMatrix::from_row_slice(j.dim, j.dim, &data))
    }
}

/// Serde adapter for `CMatrix` fields stored as matrix JSON.
pub mod matrix_serde {
    use super::{CMatrix, MatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        CMatrix::try_from(MatrixJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<CMatrix>`.
pub mod matrix_vec_serde {
    use super::{CMatrix, MatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        let js: Vec<MatrixJson> = ms.iter().map(MatrixJson::from).collect();
        js.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        Vec::<MatrixJson>::deserialize(d)?
            .into_iter()
            .map(|j| CMatrix::try_from(j).map_err(serde::de::Error::custom))
            .collect()
    }
}
