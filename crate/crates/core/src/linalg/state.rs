use serde::{Deserialize, Serialize};

use super::json::MatrixJson;
use super::{eigh, hermiticity_deviation, identity, is_finite, CMatrix};
use crate::error::{Error, Result};

/// Default Hermiticity tolerance is this times the dimension.
pub const HERM_TOL_PER_DIM: f64 = 1e-12;
/// Default eigenvalue tolerance for positivity and trace checks.
pub const DEFAULT_EIG_TOL: f64 = 1e-10;

/// A Hermitian matrix, checked on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let tol = HERM_TOL_PER_DIM * m.nrows().max(1) as f64;
        Self::with_tol(m, tol)
    }

    pub fn with_tol(m: CMatrix, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !is_finite(&m) {
            return Err(Error::NonFinite);
        }
        let deviation = hermiticity_deviation(&m);
        if deviation > tol {
            return Err(Error::NotHermitian { deviation, tol });
        }
        Ok(Self(super::hermitian_part(&m)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

impl TryFrom<MatrixJson> for HermitianMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        HermitianMatrix::new(j.try_into()?)
    }
}

impl From<HermitianMatrix> for MatrixJson {
    fn from(h: HermitianMatrix) -> Self {
        MatrixJson::from(&h.0)
    }
}

/// A density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tol(m, DEFAULT_EIG_TOL)
    }

    /// Validate with the given eigenvalue/trace tolerance. Hermiticity is
    /// checked against `max(eig_tol, 1e-12 * dim)`.
    pub fn with_tol(m: CMatrix, eig_tol: f64) -> Result<Self> {
        let herm_tol = (HERM_TOL_PER_DIM * m.nrows().max(1) as f64).max(eig_tol);
        let h = HermitianMatrix::with_tol(m, herm_tol)?.into_matrix();
        let tr = h.trace().re;
        if (tr - 1.0).abs() > eig_tol {
            return Err(Error::NotDensity(format!("trace is {tr}")));
        }
        let (vals, _) = eigh(&h);
        if vals[0] < -eig_tol {
            return Err(Error::NotPsd { min_eig: vals[0] });
        }
        Ok(Self(h))
    }

    /// Maximally mixed state `I / d`.
    pub fn maximally_mixed(d: usize) -> Self {
        Self(identity(d) / super::c(d as f64))
    }

    /// Pure state `|i><i|`.
    pub fn basis(i: usize, d: usize) -> Self {
        Self(super::ket_bra(i, i, d))
    }

    pub fn from_diagonal(p: &[f64]) -> Result<Self> {
        Self::new(super::diag(p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.0).0
    }

    pub fn min_eig(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }
}

impl TryFrom<MatrixJson> for DensityMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        DensityMatrix::new(j.try_into()?)
    }
}

impl From<DensityMatrix> for MatrixJson {
    fn from(d: DensityMatrix) -> Self {
        MatrixJson::from(&d.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{c, diag, ket_bra, pauli_x, pauli_y};
    use super::*;

    #[test]
    fn accepts_valid_density() {
        let rho = diag(&[0.25, 0.75]) + pauli_x() * c(0.1);
        assert!(DensityMatrix::new(rho).is_ok());
    }

    #[test]
    fn rejects_bad_trace_and_negativity() {
        assert!(matches!(
            DensityMatrix::new(diag(&[0.5, 0.6])),
            Err(Error::NotDensity(_))
        ));
        assert!(matches!(
            DensityMatrix::new(diag(&[1.2, -0.2])),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            DensityMatrix::new(diag(&[0.5, 0.5]) + ket_bra(0, 1, 2) * c(0.1)),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn boundary_noise_within_tolerance() {
        assert!(DensityMatrix::new(diag(&[1.0 + 1e-11, -1e-11])).is_ok());
    }

    #[test]
    fn hermitian_accepts_pauli_y() {
        assert!(HermitianMatrix::new(pauli_y()).is_ok());
        assert!(HermitianMatrix::new(ket_bra(0, 1, 2)).is_err());
    }

    #[test]
    fn rejects_nan() {
        let mut m = diag(&[1.0, 0.0]);
        m[(1, 1)] = c(f64::NAN);
        assert_eq!(HermitianMatrix::new(m), Err(Error::NonFinite));
    }
}
