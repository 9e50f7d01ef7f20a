use serde::{Deserialize, Serialize};

use super::json::MatrixJson;
use super::{eigvalsh, hermitian_part, hermiticity_deviation, identity, ket_bra, CMatrix, CVector};
use crate::error::{Error, Result};

/// Column-stacking vectorization: entry `(i, j)` lands at `i + j * rows`.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn devectorize(v: &CVector, d: usize) -> Result<CMatrix> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot be reshaped to {d}x{d}",
            v.len()
        )));
    }
    Ok(CMatrix::from_column_slice(d, d, v.as_slice()))
}

/// Matrix of `X -> A X B` under column stacking, i.e. `B^T (x) A`.
pub fn linear_map_matrix(a: &CMatrix, b: &CMatrix) -> CMatrix {
    b.transpose().kronecker(a)
}

/// A linear map on `d x d` operators, stored as a `d^2 x d^2` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    mat: CMatrix,
}

impl Superoperator {
    pub fn new(dim: usize, mat: CMatrix) -> Result<Self> {
        if mat.nrows() != dim * dim || mat.ncols() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "superoperator on dimension {dim} must be {0}x{0}, got {1}x{2}",
                dim * dim,
                mat.nrows(),
                mat.ncols()
            )));
        }
        if !super::is_finite(&mat) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim, mat })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            mat: CMatrix::zeros(dim * dim, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            mat: identity(dim * dim),
        }
    }

    /// Superoperator of `X -> A X B`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self {
            dim: a.nrows(),
            mat: linear_map_matrix(a, b),
        }
    }

    /// Unitary conjugation `X -> U X U^†`.
    pub fn conjugation(u: &CMatrix) -> Self {
        Self::sandwich(u, &u.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, superoperator acts on dimension {}",
                x.nrows(),
                x.ncols(),
                self.dim
            )));
        }
        devectorize(&(&self.mat * vectorize(x)), self.dim)
    }

    /// Composition `self after other`.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            mat: &self.mat * &other.mat,
        }
    }

    pub fn add(&self, other: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            mat: &self.mat + &other.mat,
        }
    }

    pub fn scale(&self, s: f64) -> Superoperator {
        Superoperator {
            dim: self.dim,
            mat: &self.mat * super::c(s),
        }
    }

    /// Dual map with respect to the trace pairing `tr(A^† B)`.
    pub fn adjoint(&self) -> Superoperator {
        Superoperator {
            dim: self.dim,
            mat: self.mat.adjoint(),
        }
    }

    pub fn exp(&self, t: f64) -> Superoperator {
        Superoperator {
            dim: self.dim,
            mat: super::expm(&(&self.mat * super::c(t))),
        }
    }

    pub fn choi(&self) -> ChoiMatrix {
        choi(self)
    }
}

pub fn apply_superop(s: &Superoperator, x: &CMatrix) -> Result<CMatrix> {
    s.apply(x)
}

/// Build the superoperator of `f` by applying it to every matrix unit.
pub fn superop_from_action<F>(f: F, d: usize) -> Superoperator
where
    F: Fn(&CMatrix) -> CMatrix,
{
    let mut mat = CMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for i in 0..d {
            let image = f(&ket_bra(i, j, d));
            mat.set_column(i + j * d, &vectorize(&image));
        }
    }
    Superoperator { dim: d, mat }
}

/// Choi matrix `sum_ij E_ij (x) S(E_ij)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiMatrix {
    pub dim: usize,
    #[serde(with = "super::json::matrix_serde")]
    pub mat: CMatrix,
}

impl ChoiMatrix {
    pub fn min_eig(&self) -> f64 {
        eigvalsh(&self.mat).first().copied().unwrap_or(0.0)
    }
}

pub fn choi(s: &Superoperator) -> ChoiMatrix {
    let d = s.dim;
    let mut mat = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let col = s.mat.column(i + j * d);
            // S(E_ij) occupies block (i, j)
            for b in 0..d {
                for a in 0..d {
                    mat[(i * d + a, j * d + b)] = col[a + b * d];
                }
            }
        }
    }
    ChoiMatrix { dim: d, mat }
}

/// Complete positivity through the Choi matrix.
pub fn is_cp(s: &Superoperator, tol: f64) -> bool {
    let c = choi(s);
    if hermiticity_deviation(&c.mat) > tol.max(1e-12 * c.mat.nrows() as f64) {
        return false;
    }
    eigvalsh(&hermitian_part(&c.mat))
        .first()
        .is_none_or(|&m| m >= -tol)
}

/// Trace preservation: `tr S(E_ij) = delta_ij` for every matrix unit.
pub fn is_tp(s: &Superoperator, tol: f64) -> bool {
    let d = s.dim;
    for j in 0..d {
        for i in 0..d {
            let col = s.mat.column(i + j * d);
            let tr: super::C64 = (0..d).map(|k| col[k + k * d]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (tr - super::c(target)).norm() > tol {
                return false;
            }
        }
    }
    true
}

impl From<&Superoperator> for MatrixJson {
    fn from(s: &Superoperator) -> Self {
        MatrixJson::from(&s.mat)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{c, diag, max_abs, min_eig, pauli_x, CVector, ONE, ZERO};
    use super::*;

    #[test]
    fn vectorize_round_trip() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let v = vectorize(&m);
        assert_eq!(v[1], c(3.0)); // column-stacking
        assert_eq!(devectorize(&v, 2).unwrap(), m);
        assert!(devectorize(&CVector::zeros(3), 2).is_err());
    }

    #[test]
    fn identity_action() {
        assert_eq!(superop_from_action(|x| x.clone(), 3).into_matrix(), identity(9));
    }

    #[test]
    fn conjugation_by_x_is_x_kron_xbar() {
        let x = pauli_x();
        let s = superop_from_action(|a| &x * a * &x, 2);
        let expected = x.kronecker(&x.conjugate());
        assert!(max_abs(&(s.matrix() - expected)) < 1e-15);
    }

    #[test]
    fn sandwich_matches_action() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), ZERO, c(-1.0)]);
        let b = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, c(3.0), c(0.5)]);
        let s = Superoperator::sandwich(&a, &b);
        let f = superop_from_action(|x| &a * x * &b, 2);
        assert!(max_abs(&(s.matrix() - f.matrix())) < 1e-15);
    }

    #[test]
    fn identity_choi_is_scaled_bell_projector() {
        let c_id = choi(&Superoperator::identity(2));
        let mut expected = CMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            expected[(i, j)] = ONE;
        }
        assert_eq!(c_id.mat, expected);
        assert!(is_cp(&Superoperator::identity(2), 1e-12));
        assert!(is_tp(&Superoperator::identity(2), 1e-12));
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let t = superop_from_action(|x| x.transpose(), 2);
        assert!(is_tp(&t, 1e-12));
        assert!(!is_cp(&t, 1e-9));
        assert!((min_eig(&choi(&t).mat) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn replacer_channel_choi_structure() {
        let sigma = diag(&[0.3, 0.7]) + pauli_x() * c(0.2);
        let r = superop_from_action(|x| &sigma * x.trace(), 2);
        assert!(is_cp(&r, 1e-12) && is_tp(&r, 1e-12));
        assert!(max_abs(&(choi(&r).mat - identity(2).kronecker(&sigma))) < 1e-15);
    }
}
