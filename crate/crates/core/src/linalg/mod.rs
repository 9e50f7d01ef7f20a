//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Operators on a `d`-level
//! system are `d x d`; superoperators act on column-stacked vectorizations
//! and are `d^2 x d^2`.

mod expm;
pub mod json;
pub mod random;
mod state;
mod superop;

pub use expm::{expm, expm_hermitian};
pub use state::{DensityMatrix, HermitianMatrix, DEFAULT_EIG_TOL, HERM_TOL_PER_DIM};
pub use superop::{
    apply_superop, choi, devectorize, is_cp, is_tp, linear_map_matrix, superop_from_action,
    vectorize, ChoiMatrix, Superoperator,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn zeros(d: usize) -> CMatrix {
    CMatrix::zeros(d, d)
}

/// Matrix unit `|i><j|` on a `d`-dimensional space.
pub fn ket_bra(i: usize, j: usize, d: usize) -> CMatrix {
    let mut m = zeros(d);
    m[(i, j)] = ONE;
    m
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let d = values.len();
    let mut m = zeros(d);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v);
    }
    m
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Kronecker product; the first factor indexes the coarse blocks.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all(factors: &[CMatrix]) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// Embed a single-site operator at position `site` of `n_sites` qubits.
pub fn embed_qubit_op(op: &CMatrix, site: usize, n_sites: usize) -> CMatrix {
    let factors: Vec<CMatrix> = (0..n_sites)
        .map(|j| if j == site { op.clone() } else { identity(op.nrows()) })
        .collect();
    tensor_all(&factors)
}

/// Partial trace over every factor not listed in `keep`.
///
/// `dims` gives the factor dimensions in tensor order. Kept factors retain
/// their relative order.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if m.nrows() != m.ncols() || m.nrows() != total {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, factor dims {:?} multiply to {}",
            m.nrows(),
            m.ncols(),
            dims,
            total
        )));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "keep {:?} out of range for {} factors",
            keep,
            dims.len()
        )));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep_sorted.contains(i)).collect();

    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&i| dims[i]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&i| dims[i]).collect();
    let d_keep: usize = kept_dims.iter().product();
    let d_trace: usize = traced_dims.iter().product();

    // strides of each factor in the full index
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let full_index = |kept_multi: usize, traced_multi: usize| -> usize {
        let mut idx = 0;
        let mut rem = kept_multi;
        for (pos, &f) in keep_sorted.iter().enumerate().rev() {
            let digit = rem % kept_dims[pos];
            rem /= kept_dims[pos];
            idx += digit * strides[f];
        }
        let mut rem = traced_multi;
        for (pos, &f) in traced.iter().enumerate().rev() {
            let digit = rem % traced_dims[pos];
            rem /= traced_dims[pos];
            idx += digit * strides[f];
        }
        idx
    };

    let mut out = CMatrix::zeros(d_keep, d_keep);
    for r in 0..d_keep {
        for col in 0..d_keep {
            let mut acc = ZERO;
            for t in 0..d_trace {
                acc += m[(full_index(r, t), full_index(col, t))];
            }
            out[(r, col)] = acc;
        }
    }
    Ok(out)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5)
}

/// Largest absolute entry.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_deviation(a: &CMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Hilbert-Schmidt inner product `tr(a^† b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is symmetrized first; callers are responsible for checking
/// that it was Hermitian to begin with.
pub fn eigh(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let h = hermitian_part(a);
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    eigh(a).0
}

pub fn min_eig(a: &CMatrix) -> f64 {
    eigvalsh(a).first().copied().unwrap_or(0.0)
}

/// Rebuild `V diag(f(lambda)) V^†` from an eigendecomposition.
pub fn spectral_apply(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let fj = f(v);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vectors.adjoint()
}

fn check_psd(values: &[f64], tol: f64) -> Result<()> {
    match values.first() {
        Some(&m) if m < -tol => Err(Error::NotPsd { min_eig: m }),
        _ => Ok(()),
    }
}

/// Square root of a PSD matrix; eigenvalues in `[-tol, 0)` are clamped to 0.
pub fn sqrt_psd(a: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (vals, vecs) = eigh(a);
    check_psd(&vals, tol)?;
    Ok(spectral_apply(&vals, &vecs, |x| c(x.max(0.0).sqrt())))
}

/// Moore-Penrose inverse of a PSD matrix, restricted to its support
/// (eigenvalues `<= tol` are treated as zero).
pub fn pinv_psd(a: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (vals, vecs) = eigh(a);
    check_psd(&vals, tol)?;
    Ok(spectral_apply(&vals, &vecs, |x| {
        if x > tol {
            c(1.0 / x)
        } else {
            ZERO
        }
    }))
}

/// Trace norm (sum of singular values).
pub fn trace_norm(a: &CMatrix) -> f64 {
    if hermiticity_deviation(a) <= 1e-13 * (1.0 + max_abs(a)) {
        eigvalsh(a).iter().map(|x| x.abs()).sum()
    } else {
        a.clone().svd(false, false).singular_values.iter().sum()
    }
}

/// Trace distance `||a - b||_1 / 2`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * trace_norm(&(a - b))
}

/// Schatten p-norm of a Hermitian matrix.
pub fn schatten_norm(a: &CMatrix, p: f64) -> f64 {
    let vals = eigvalsh(a);
    if p.is_infinite() {
        return vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    }
    vals.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Eigenvalues of a general complex square matrix.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000).ok_or(Error::NoConvergence)?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Orthonormal basis (as columns) of the numerical null space.
///
/// Singular values below `tol * max(1, sigma_max)` count as zero.
pub fn null_space(a: &CMatrix, tol: f64) -> CMatrix {
    let n = a.ncols();
    // Pad short matrices with zero rows so the SVD returns a full V.
    let padded = if a.nrows() < n {
        let mut p = CMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0_f64, |m, &x| m.max(x));
    let cutoff = tol * smax.max(1.0);
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cutoff).collect();
    let mut out = CMatrix::zeros(n, cols.len());
    for (dst, &src) in cols.iter().enumerate() {
        out.set_column(dst, &v_t.row(src).adjoint());
    }
    out
}

/// Check that `u` is unitary within `tol` (max-abs deviation of `u^† u` from I).
pub fn check_unitary(u: &CMatrix, tol: f64) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch("unitary must be square".into()));
    }
    let dev = max_abs(&(u.adjoint() * u - identity(u.nrows())));
    if dev > tol {
        Err(Error::NotUnitary(dev))
    } else {
        Ok(())
    }
}

/// PSD test of the block matrix `[[A, B], [B^†, C]]` through the Schur
/// complement of an invertible Hermitian `A`.
///
/// Returns `A >= 0 && C - B^† A^{-1} B >= -tol`.
pub fn schur_psd_check(a: &CMatrix, b: &CMatrix, cmat: &CMatrix, tol: f64) -> Result<bool> {
    if a.nrows() != a.ncols() || cmat.nrows() != cmat.ncols() {
        return Err(Error::DimensionMismatch("diagonal blocks must be square".into()));
    }
    if b.nrows() != a.nrows() || b.ncols() != cmat.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "off-diagonal block is {}x{}, expected {}x{}",
            b.nrows(),
            b.ncols(),
            a.nrows(),
            cmat.nrows()
        )));
    }
    let (vals, vecs) = eigh(a);
    let scale = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    if vals.iter().any(|x| x.abs() <= 1e-14 * scale) {
        return Err(Error::Singular);
    }
    if vals[0] < 0.0 {
        return Ok(false);
    }
    let a_inv = spectral_apply(&vals, &vecs, |x| c(1.0 / x));
    let schur = cmat - b.adjoint() * a_inv * b;
    Ok(cmat.nrows() == 0 || min_eig(&schur) >= -tol)
}

/// Extract the sub-block `rows x cols` of `m` expressed in the orthonormal
/// column bases `left` and `right`: `left^† m right`.
pub fn block(m: &CMatrix, left: &CMatrix, right: &CMatrix) -> CMatrix {
    left.adjoint() * m * right
}
