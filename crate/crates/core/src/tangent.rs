//! Tangent-cone geometry of the state space: support blocks, cone
//! membership, second-order curves and constructive lifts of tangent
//! directions to Lindbladians.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::json::{matrix_serde, MatrixJson};
use crate::linalg::{
    self, c, eigh, eigvalsh, frobenius, hermiticity_deviation, identity, min_eig, CMatrix,
    DensityMatrix, DEFAULT_EIG_TOL, I,
};
use crate::lindblad::{self, conditional_cp_margin, replacer_generator, JumpTerm, Lindbladian};

/// Default cone tolerance for single states.
pub const CONE_TOL: f64 = 1e-10;
/// Default cone tolerance along sampled paths (absorbs differencing noise).
pub const PATH_TOL: f64 = 1e-7;
/// Acceptable lift residual.
pub const LIFT_TOL: f64 = 1e-8;

/// A traceless Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct TangentVector(CMatrix);

impl TangentVector {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tol(m, CONE_TOL)
    }

    pub fn with_tol(m: CMatrix, trace_tol: f64) -> Result<Self> {
        let h = linalg::HermitianMatrix::new(m)?.into_matrix();
        let tr = h.trace().re;
        if tr.abs() > trace_tol {
            return Err(Error::InvalidParameter(format!(
                "tangent vector must be traceless, trace is {tr:e}"
            )));
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

impl TryFrom<MatrixJson> for TangentVector {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        TangentVector::new(j.try_into()?)
    }
}

impl From<TangentVector> for MatrixJson {
    fn from(t: TangentVector) -> Self {
        MatrixJson::from(&t.0)
    }
}

/// Eigenbasis of a density adapted to its support.
#[derive(Debug, Clone)]
pub struct SupportDecomposition {
    pub rank: usize,
    /// Unitary whose first `rank` columns span the support, ordered by
    /// decreasing eigenvalue.
    pub basis: CMatrix,
    /// Orthogonal projector onto the support.
    pub projector: CMatrix,
    /// Diagonal support block of the density (positive definite).
    pub rho11: CMatrix,
    /// All eigenvalues, in basis order.
    pub eigenvalues: Vec<f64>,
}

/// Blocks of an operator in a support-adapted basis.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub x11: CMatrix,
    pub x12: CMatrix,
    pub x21: CMatrix,
    pub x22: CMatrix,
}

impl SupportDecomposition {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn support_basis(&self) -> CMatrix {
        self.basis.columns(0, self.rank).into_owned()
    }

    pub fn perp_basis(&self) -> CMatrix {
        self.basis.columns(self.rank, self.dim() - self.rank).into_owned()
    }

    /// Smallest eigenvalue on the support.
    pub fn min_support_eig(&self) -> f64 {
        self.eigenvalues[self.rank - 1]
    }

    pub fn blocks(&self, x: &CMatrix) -> Blocks {
        let v = &self.basis;
        let xa = v.adjoint() * x * v;
        let (r, d) = (self.rank, self.dim());
        Blocks {
            x11: xa.view((0, 0), (r, r)).into_owned(),
            x12: xa.view((0, r), (r, d - r)).into_owned(),
            x21: xa.view((r, 0), (d - r, r)).into_owned(),
            x22: linalg::hermitian_part(&xa.view((r, r), (d - r, d - r)).into_owned()),
        }
    }
}

/// Split the state space into the support of `rho` (eigenvalues `> tol`)
/// and its complement.
pub fn support_projection(rho: &DensityMatrix, tol: f64) -> SupportDecomposition {
    let (vals, vecs) = eigh(rho.matrix());
    let d = vals.len();
    let order: Vec<usize> = (0..d).rev().collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut basis = CMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &vecs.column(src));
    }
    // A density always has a nonzero eigenvalue; keep at least one.
    let rank = eigenvalues.iter().filter(|&&x| x > tol).count().max(1);
    let sb = basis.columns(0, rank).into_owned();
    let projector = &sb * sb.adjoint();
    let rho11 = linalg::diag(&eigenvalues[..rank]);
    SupportDecomposition {
        rank,
        basis,
        projector,
        rho11,
        eigenvalues,
    }
}

fn check_hermitian(x: &CMatrix, d: usize, tol: f64) -> Result<()> {
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "direction is {}x{}, state has dimension {d}",
            x.nrows(),
            x.ncols()
        )));
    }
    if !linalg::is_finite(x) {
        return Err(Error::NonFinite);
    }
    let herm_tol = tol.max(linalg::HERM_TOL_PER_DIM * d as f64);
    let dev = hermiticity_deviation(x);
    if dev > herm_tol {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol: herm_tol,
        });
    }
    Ok(())
}

/// Cone membership: `|tr x| <= tol` and the block of `x` orthogonal to the
/// support of `rho` is positive semidefinite up to `tol`.
pub fn in_tangent_cone(rho: &DensityMatrix, x: &CMatrix, tol: f64) -> Result<bool> {
    Ok(cone_violation(rho, x, tol)?.is_none())
}

/// `None` when `x` is in the cone, otherwise a description of the failure.
pub fn cone_violation(rho: &DensityMatrix, x: &CMatrix, tol: f64) -> Result<Option<String>> {
    check_hermitian(x, rho.dim(), tol)?;
    let tr = x.trace().re;
    if tr.abs() > tol {
        return Ok(Some(format!("trace {tr:e} exceeds tolerance {tol:e}")));
    }
    let sd = support_projection(rho, DEFAULT_EIG_TOL);
    if sd.rank == rho.dim() {
        return Ok(None);
    }
    let m = min_eig(&sd.blocks(x).x22);
    if m < -tol {
        return Ok(Some(format!(
            "block orthogonal to the support has eigenvalue {m:e}"
        )));
    }
    Ok(None)
}

/// Largest `eps` with `rho + eps x >= 0`.
///
/// `Some(f64::INFINITY)` when every `eps >= 0` works (only for `x = 0`),
/// `None` when no positive `eps` works.
pub fn linear_admissible(rho: &DensityMatrix, x: &CMatrix) -> Result<Option<f64>> {
    let tol = DEFAULT_EIG_TOL;
    check_hermitian(x, rho.dim(), tol)?;
    if x.trace().norm() > tol {
        return Err(Error::InvalidParameter(format!(
            "direction must be traceless, trace is {:e}",
            x.trace().re
        )));
    }
    if linalg::max_abs(x) <= tol {
        return Ok(Some(f64::INFINITY));
    }
    let sd = support_projection(rho, tol);
    let b = sd.blocks(x);
    let r = sd.rank;
    let m = if r < rho.dim() {
        let (vals, vecs) = eigh(&b.x22);
        if vals[0] < -tol {
            return Ok(None);
        }
        // range(x21) must lie in range(x22)
        let scale = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
        let ker: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= tol * scale).collect();
        for &k in &ker {
            let v = vecs.column(k);
            let leak = (v.adjoint() * &b.x21).norm();
            if leak > tol * (1.0 + frobenius(&b.x21)) {
                return Ok(None);
            }
        }
        let pinv = linalg::spectral_apply(&vals, &vecs, |x| {
            if x > tol * scale {
                c(1.0 / x)
            } else {
                c(0.0)
            }
        });
        &b.x11 - &b.x12 * pinv * &b.x21
    } else {
        b.x11.clone()
    };
    let inv_sqrt = linalg::diag(
        &sd.eigenvalues[..r]
            .iter()
            .map(|p| 1.0 / p.sqrt())
            .collect::<Vec<_>>(),
    );
    let n = &inv_sqrt * m * &inv_sqrt;
    let lmin = min_eig(&n);
    if lmin >= 0.0 {
        Ok(Some(f64::INFINITY))
    } else {
        Ok(Some(1.0 / (-lmin)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderWitness {
    #[serde(with = "matrix_serde")]
    pub x2: CMatrix,
    /// `rho + t x + t^2 x2 >= 0` for every `t` in `(0, eps_max]`.
    pub eps_max: f64,
    /// Number of grid points checked during certification.
    pub grid_points: usize,
}

fn curve(rho: &CMatrix, x: &CMatrix, x2: &CMatrix, t: f64) -> CMatrix {
    rho + x * c(t) + x2 * c(t * t)
}

/// Second-order curve `rho + t x + t^2 x2` that stays in the state space.
///
/// In the basis (support, range of the perpendicular block of `x`, kernel of
/// that block), `x2` is `diag(-(tr B / r) I, 0, B)` with
/// `B = 2 x31 rho11^{-1} x13`. The admissible interval is located by a grid
/// scan with bisection, shrunk by 10%, then certified on a fresh grid by
/// direct eigenvalue checks and a Schur-complement test.
pub fn second_order_witness(rho: &DensityMatrix, x: &CMatrix) -> Result<SecondOrderWitness> {
    let tol = CONE_TOL;
    if let Some(why) = cone_violation(rho, x, tol)? {
        return Err(Error::NotInCone(why));
    }
    let d = rho.dim();
    let sd = support_projection(rho, DEFAULT_EIG_TOL);
    let r = sd.rank;

    // refine the perpendicular block by the spectrum of x22
    let b = sd.blocks(x);
    let (pvals, pvecs) = eigh(&b.x22);
    let pscale = pvals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let third: Vec<usize> = (0..pvals.len())
        .filter(|&i| pvals[i] <= 1e-9 * pscale)
        .collect();
    let second: Vec<usize> = (0..pvals.len())
        .filter(|&i| pvals[i] > 1e-9 * pscale)
        .collect();
    let perp = sd.perp_basis();
    let mut w = CMatrix::zeros(d, d);
    w.view_mut((0, 0), (d, r)).copy_from(&sd.support_basis());
    for (k, &i) in second.iter().chain(third.iter()).enumerate() {
        w.set_column(r + k, &(&perp * pvecs.column(i)));
    }
    let n2 = second.len();
    let n3 = third.len();

    let xa = w.adjoint() * x * &w;
    let mut x2a = CMatrix::zeros(d, d);
    if n3 > 0 {
        let x13 = xa.view((0, r + n2), (r, n3)).into_owned();
        let rho11_inv = linalg::diag(
            &sd.eigenvalues[..r]
                .iter()
                .map(|p| 1.0 / p)
                .collect::<Vec<_>>(),
        );
        let bb = linalg::hermitian_part(&(x13.adjoint() * rho11_inv * &x13 * c(2.0)));
        let shift = bb.trace().re / r as f64;
        x2a.view_mut((r + n2, r + n2), (n3, n3)).copy_from(&bb);
        for i in 0..r {
            x2a[(i, i)] = c(-shift);
        }
    }
    let x2 = linalg::hermitian_part(&(&w * x2a * w.adjoint()));

    let rho_m = rho.matrix();
    let ok = |t: f64| min_eig(&curve(rho_m, x, &x2, t)) >= -1e-12;
    let norm = linalg::schatten_norm(x, f64::INFINITY) + linalg::schatten_norm(&x2, f64::INFINITY).sqrt();
    let mut hi = if norm > 0.0 { 4.0 / norm } else { 1.0 };
    const N: usize = 400;

    // find a grid interval containing the first failure
    let mut bracket = None;
    for _ in 0..200 {
        let fail = (1..=N).find(|&k| !ok(hi * k as f64 / N as f64));
        match fail {
            Some(1) => hi /= N as f64,
            Some(k) => {
                bracket = Some((hi * (k - 1) as f64 / N as f64, hi * k as f64 / N as f64));
                break;
            }
            None if norm == 0.0 => break,
            None => hi *= 4.0,
        }
        if !(hi.is_finite() && hi > f64::MIN_POSITIVE) {
            break;
        }
    }
    let boundary = match bracket {
        Some((mut lo, mut up)) => {
            for _ in 0..80 {
                let mid = 0.5 * (lo + up);
                if ok(mid) {
                    lo = mid;
                } else {
                    up = mid;
                }
            }
            lo
        }
        None if norm == 0.0 => f64::INFINITY,
        None => return Err(Error::NoConvergence),
    };
    let eps_max = if boundary.is_finite() { 0.9 * boundary } else { f64::MAX };
    if !(eps_max > 0.0) {
        return Err(Error::NoConvergence);
    }

    // certification on a fresh grid
    let cert_hi = eps_max.min(1e6);
    let head = r + n2;
    for k in 1..=N {
        let t = cert_hi * k as f64 / N as f64;
        let m = curve(rho_m, x, &x2, t);
        if min_eig(&m) < -1e-12 {
            return Err(Error::NoConvergence);
        }
        if n3 > 0 && head > 0 {
            let ma = w.adjoint() * &m * &w;
            let a = ma.view((0, 0), (head, head)).into_owned();
            let bm = ma.view((0, head), (head, n3)).into_owned();
            let cm = ma.view((head, head), (n3, n3)).into_owned();
            match linalg::schur_psd_check(&a, &bm, &cm, 1e-12) {
                Ok(true) | Err(Error::Singular) => {}
                _ => return Err(Error::NoConvergence),
            }
        }
    }
    Ok(SecondOrderWitness {
        x2,
        eps_max,
        grid_points: N,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftCertificate {
    pub lindbladian: Lindbladian,
    /// Frobenius norm of `L(rho) - x`.
    pub residual: f64,
    /// Smallest eigenvalue of the generator's Choi matrix on the
    /// complement of the maximally entangled vector.
    pub cp_margin: f64,
    /// Step of the replacer component, absent when it is not needed.
    pub replacer_epsilon: Option<f64>,
}

/// Lindbladian `L` with `L(rho) = x` for a cone element `x`.
///
/// Built in the support-adapted basis from three parts: a Hamiltonian that
/// produces the off-diagonal blocks, one jump per positive eigenvalue of the
/// perpendicular block (feeding from the top support eigenvector), and a
/// scaled replacer generator that supplies the remaining support block.
pub fn lift(rho: &DensityMatrix, x: &CMatrix) -> Result<LiftCertificate> {
    lift_with_tol(rho, x, CONE_TOL, DEFAULT_EIG_TOL)
}

/// [`lift`] with explicit cone and support tolerances.
pub fn lift_with_tol(
    rho: &DensityMatrix,
    x: &CMatrix,
    cone_tol: f64,
    support_tol: f64,
) -> Result<LiftCertificate> {
    if let Some(why) = cone_violation(rho, x, cone_tol)? {
        return Err(Error::NotInCone(why));
    }
    let d = rho.dim();
    let sd = support_projection(rho, support_tol);
    let r = sd.rank;
    let v = &sd.basis;
    let b = sd.blocks(x);

    // Hamiltonian cross term
    let mut h = CMatrix::zeros(d, d);
    if r < d {
        let rho11_inv = linalg::diag(
            &sd.eigenvalues[..r]
                .iter()
                .map(|p| 1.0 / p)
                .collect::<Vec<_>>(),
        );
        let hb = rho11_inv * &b.x12 * (-I);
        h.view_mut((0, r), (r, d - r)).copy_from(&hb);
        h.view_mut((r, 0), (d - r, r)).copy_from(&hb.adjoint());
    }

    // spectral jumps out of the top support eigenvector
    let p = sd.eigenvalues[0];
    let mut jumps = Vec::new();
    let mut fed = 0.0;
    if r < d {
        let (svals, svecs) = eigh(&b.x22);
        for (m, &s) in svals.iter().enumerate() {
            if s <= cone_tol {
                continue;
            }
            let mut jump = CMatrix::zeros(d, d);
            for i in 0..d - r {
                jump[(r + i, 0)] = svecs[(i, m)];
            }
            jumps.push(JumpTerm::new(jump, s / (2.0 * p)));
            fed += s;
        }
    }

    // replacer on the support block
    let mut y = b.x11.clone();
    y[(0, 0)] += c(fed);
    let ytr = y.trace() / c(r as f64);
    y -= identity(r) * ytr;
    let y = linalg::hermitian_part(&y);
    let ynorm = linalg::schatten_norm(&y, f64::INFINITY);
    let mut replacer_epsilon = None;
    let mut adapted = Lindbladian {
        dim: d,
        hamiltonian: h,
        jumps,
        bilinear: None,
    };
    if ynorm > 1e-15 {
        let lmin = sd.eigenvalues[r - 1];
        let eps = 0.5 * lmin / ynorm.max(cone_tol);
        if !(eps >= f64::EPSILON) {
            return Err(Error::EpsilonUnderflow(eps));
        }
        let mut sigma = CMatrix::zeros(d, d);
        let block = &sd.rho11 + &y * c(eps);
        sigma.view_mut((0, 0), (r, r)).copy_from(&block);
        let sigma = DensityMatrix::with_tol(sigma, 1e-8)?;
        let rep = replacer_generator(&sigma).scaled(1.0 / eps);
        adapted = adapted.plus(&rep)?;
        replacer_epsilon = Some(eps);
    }

    // back to the original basis
    let l = lindblad::conjugate(&adapted, &v.adjoint())?;
    let out = lindblad::apply(&l, rho)?;
    let residual = frobenius(&(out - x));
    let cp_margin = conditional_cp_margin(&lindblad::build(&l.dissipative_part()));
    Ok(LiftCertificate {
        lindbladian: l,
        residual,
        cp_margin,
        replacer_epsilon,
    })
}

/// Sampled curve of densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivs: Option<Vec<TangentVector>>,
}

impl PathSample {
    pub fn new(times: Vec<f64>, states: Vec<DensityMatrix>) -> Result<Self> {
        let p = Self {
            times,
            states,
            derivs: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} states",
                self.times.len(),
                self.states.len()
            )));
        }
        if let Some(dv) = &self.derivs {
            if dv.len() != self.times.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} times but {} derivatives",
                    self.times.len(),
                    dv.len()
                )));
            }
        }
        if self.times.len() < 2 {
            return Err(Error::InvalidParameter("a path needs at least two samples".into()));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidParameter("times must be finite and nonnegative".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        let d = self.states[0].dim();
        if self.states.iter().any(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch("states differ in dimension".into()));
        }
        Ok(())
    }
}

/// Second-order finite-difference derivatives on a nonuniform grid,
/// projected to traceless Hermitian matrices.
pub fn finite_difference_derivatives(times: &[f64], states: &[CMatrix]) -> Vec<CMatrix> {
    let n = times.len();
    let clean = |m: CMatrix| {
        let h = linalg::hermitian_part(&m);
        let d = h.nrows();
        let tr = h.trace() / c(d as f64);
        h - identity(d) * tr
    };
    if n == 2 {
        let dx = (&states[1] - &states[0]) / c(times[1] - times[0]);
        return vec![clean(dx.clone()), clean(dx)];
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let m = if i == 0 {
            let (h1, h2) = (times[1] - times[0], times[2] - times[1]);
            &states[0] * c(-(2.0 * h1 + h2) / (h1 * (h1 + h2)))
                + &states[1] * c((h1 + h2) / (h1 * h2))
                - &states[2] * c(h1 / (h2 * (h1 + h2)))
        } else if i == n - 1 {
            let (h1, h2) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
            &states[n - 3] * c(h2 / (h1 * (h1 + h2)))
                - &states[n - 2] * c((h1 + h2) / (h1 * h2))
                + &states[n - 1] * c((2.0 * h2 + h1) / (h2 * (h1 + h2)))
        } else {
            let (h1, h2) = (times[i] - times[i - 1], times[i + 1] - times[i]);
            &states[i - 1] * c(-h2 / (h1 * (h1 + h2)))
                + &states[i] * c((h2 - h1) / (h1 * h2))
                + &states[i + 1] * c(h1 / (h2 * (h1 + h2)))
        };
        out.push(clean(m));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrability {
    /// Estimate of the integral of `1 / lambda_min(t)`; infinite when the
    /// smallest support eigenvalue reaches zero.
    pub int_inv_lambda: f64,
    /// Estimate of the integral of `lambda_min(t)^{-1/2}`.
    pub int_inv_sqrt_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLift {
    /// Generator used on each interval `[t_i, t_{i+1}]`.
    pub generators: Vec<Lindbladian>,
    pub integrability: Integrability,
    /// Trace norm between the piecewise-constant reconstruction and the
    /// final sample.
    pub reconstruction_error: f64,
    /// Smallest support eigenvalue per sample (the terminal sample follows
    /// the eigenvalue branch of the last interval).
    pub lambda_min: Vec<f64>,
    /// Lift residual per sample; the terminal sample is not lifted.
    pub residuals: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct PathOptions {
    pub path_tol: f64,
    pub support_tol: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            path_tol: PATH_TOL,
            support_tol: 1e-9,
        }
    }
}

/// Lift a sampled path interval by interval.
///
/// Each interval `[t_i, t_{i+1}]` uses the lift of `(rho_i, rho_dot_i)`.
/// The terminal sample is neither lifted nor cone-checked, since a path may
/// leave through the boundary there. Integrals assume `lambda_min` is linear
/// on each interval and are evaluated exactly under that assumption.
pub fn lift_path(path: &PathSample, opts: PathOptions) -> Result<PathLift> {
    path.validate()?;
    let n = path.times.len();
    let mats: Vec<CMatrix> = path.states.iter().map(|s| s.matrix().clone()).collect();
    let derivs: Vec<CMatrix> = match &path.derivs {
        Some(dv) => dv.iter().map(|t| t.matrix().clone()).collect(),
        None => finite_difference_derivatives(&path.times, &mats),
    };

    let lifts: Vec<Result<LiftCertificate>> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let rho = &path.states[i];
            match cone_violation(rho, &derivs[i], opts.path_tol)? {
                Some(_) => Err(Error::PathSampleNotInCone { index: i }),
                None => lift_with_tol(rho, &derivs[i], opts.path_tol, opts.support_tol),
            }
        })
        .collect();
    let lifts: Vec<LiftCertificate> = lifts.into_iter().collect::<Result<_>>()?;

    // eigenvalue branches
    let spectra: Vec<Vec<f64>> = path
        .states
        .iter()
        .map(|s| {
            let mut v = eigvalsh(s.matrix());
            v.reverse();
            v
        })
        .collect();
    let ranks: Vec<usize> = spectra
        .iter()
        .map(|v| v.iter().filter(|&&x| x > opts.support_tol).count().max(1))
        .collect();
    let mut lambda_min: Vec<f64> = (0..n).map(|i| spectra[i][ranks[i] - 1].max(0.0)).collect();
    lambda_min[n - 1] = spectra[n - 1][ranks[n - 2] - 1].max(0.0);

    let mut int_inv = 0.0;
    let mut int_inv_sqrt = 0.0;
    for i in 0..n - 1 {
        let h = path.times[i + 1] - path.times[i];
        let l0 = spectra[i][ranks[i] - 1].max(0.0);
        let l1 = spectra[i + 1][ranks[i] - 1].max(0.0);
        int_inv += integral_inv(l0, l1, h, opts.support_tol);
        int_inv_sqrt += if l0 + l1 <= opts.support_tol {
            f64::INFINITY
        } else {
            2.0 * h / (l0.sqrt() + l1.sqrt())
        };
    }

    let mut eta = path.states[0].matrix().clone();
    for (i, l) in lifts.iter().enumerate() {
        let dt = path.times[i + 1] - path.times[i];
        eta = lindblad::build(&l.lindbladian).exp(dt).apply(&eta)?;
    }
    let reconstruction_error = linalg::trace_norm(&(eta - path.states[n - 1].matrix()));

    let mut residuals: Vec<Option<f64>> = lifts.iter().map(|l| Some(l.residual)).collect();
    residuals.push(None);
    Ok(PathLift {
        generators: lifts.into_iter().map(|l| l.lindbladian).collect(),
        integrability: Integrability {
            int_inv_lambda: int_inv,
            int_inv_sqrt_lambda: int_inv_sqrt,
        },
        reconstruction_error,
        lambda_min,
        residuals,
    })
}

/// Integral of `1/lambda` over an interval of length `h` on which lambda is
/// linear from `l0` to `l1`.
fn integral_inv(l0: f64, l1: f64, h: f64, tol: f64) -> f64 {
    if l0 <= tol || l1 <= tol {
        return f64::INFINITY;
    }
    let diff = l1 - l0;
    if diff.abs() <= 1e-12 * l0.max(l1) {
        h / (0.5 * (l0 + l1))
    } else {
        h * (l1.ln() - l0.ln()) / diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{haar_unitary, random_density, random_hermitian, seeded_rng, SeededRng};
    use crate::linalg::{diag, ket_bra, max_abs, pauli_x, pauli_z, trace_norm};
    use proptest::prelude::*;

    fn pure0() -> DensityMatrix {
        DensityMatrix::basis(0, 2)
    }

    /// Random cone element at `rho`, built in its support basis.
    fn random_cone_element(rho: &DensityMatrix, rng: &mut SeededRng) -> CMatrix {
        let d = rho.dim();
        let sd = support_projection(rho, DEFAULT_EIG_TOL);
        let r = sd.rank;
        let mut xa = random_hermitian(d, rng);
        if r < d {
            let k = d - r;
            let g = crate::linalg::random::ginibre(k, 1 + (k / 2), rng);
            xa.view_mut((r, r), (k, k)).copy_from(&(&g * g.adjoint()));
        }
        let tr = xa.trace().re;
        for i in 0..r {
            xa[(i, i)] -= c(tr / r as f64);
        }
        linalg::hermitian_part(&(&sd.basis * xa * sd.basis.adjoint()))
    }

    #[test]
    fn support_examples() {
        let sd = support_projection(&DensityMatrix::maximally_mixed(3), 1e-10);
        assert_eq!(sd.rank, 3);
        assert!(max_abs(&(sd.projector - identity(3))) < 1e-14);

        let sd = support_projection(&pure0(), 1e-10);
        assert_eq!(sd.rank, 1);
        assert!((sd.rho11[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!(max_abs(&(sd.projector - ket_bra(0, 0, 2))) < 1e-14);

        let rho = DensityMatrix::from_diagonal(&[0.7, 0.3, 0.0]).unwrap();
        assert_eq!(support_projection(&rho, 1e-10).rank, 2);
    }

    #[test]
    fn cone_examples() {
        assert!(in_tangent_cone(&pure0(), &pauli_x(), 1e-10).unwrap());
        assert!(!in_tangent_cone(&pure0(), &pauli_z(), 1e-10).unwrap());
        let mm = DensityMatrix::maximally_mixed(3);
        let x = crate::linalg::random::random_traceless_hermitian(3, &mut seeded_rng(1));
        assert!(in_tangent_cone(&mm, &x, 1e-10).unwrap());
        assert!(!in_tangent_cone(&mm, &identity(3), 1e-10).unwrap());
        assert!(matches!(
            in_tangent_cone(&pure0(), &ket_bra(0, 1, 2), 1e-10),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn linear_admissible_examples() {
        let mm = DensityMatrix::maximally_mixed(2);
        let e = linear_admissible(&mm, &(pauli_z() * c(0.5))).unwrap().unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        assert_eq!(linear_admissible(&pure0(), &pauli_x()).unwrap(), None);
        assert_eq!(
            linear_admissible(&pure0(), &CMatrix::zeros(2, 2)).unwrap(),
            Some(f64::INFINITY)
        );
        // boundary state, direction moving into the interior
        let x = diag(&[-1.0, 1.0]);
        assert!((linear_admissible(&pure0(), &x).unwrap().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn witness_for_pauli_x() {
        let w = second_order_witness(&pure0(), &pauli_x()).unwrap();
        assert!(max_abs(&(&w.x2 - diag(&[-2.0, 2.0]))) < 1e-12);
        assert!(w.eps_max > 0.4 && w.eps_max < 0.5);
        for eps in [0.05, 0.1, 0.2] {
            let m = curve(pure0().matrix(), &pauli_x(), &w.x2, eps);
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
            assert!((det - eps * eps * (1.0 - 4.0 * eps * eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_without_third_block() {
        let rho = DensityMatrix::from_diagonal(&[1.0, 0.0, 0.0]).unwrap();
        let x = diag(&[-1.0, 0.5, 0.5]) + (ket_bra(0, 1, 3) + ket_bra(1, 0, 3)) * c(0.3);
        let w = second_order_witness(&rho, &x).unwrap();
        assert!(max_abs(&w.x2) < 1e-15);
        assert!(w.eps_max > 0.0);
    }

    #[test]
    fn witness_rejects_non_cone() {
        assert!(matches!(
            second_order_witness(&pure0(), &pauli_z()),
            Err(Error::NotInCone(_))
        ));
    }

    #[test]
    fn lift_interior_is_pure_replacer() {
        let mut rng = seeded_rng(3);
        let rho = DensityMatrix::new(random_density(3, 3, &mut rng)).unwrap();
        let x = crate::linalg::random::random_traceless_hermitian(3, &mut rng) * c(0.1);
        let cert = lift(&rho, &x).unwrap();
        assert!(cert.residual < 1e-12);
        assert!(max_abs(&cert.lindbladian.hamiltonian) < 1e-15);
        assert!(cert.replacer_epsilon.is_some());
    }

    #[test]
    fn lift_pauli_x_is_hamiltonian_only() {
        let cert = lift(&pure0(), &pauli_x()).unwrap();
        assert!(cert.residual < 1e-12);
        assert!(cert.lindbladian.jumps.is_empty());
        assert!(cert.replacer_epsilon.is_none());
        let out = lindblad::apply(&cert.lindbladian, &pure0()).unwrap();
        assert!(max_abs(&(out - pauli_x())) < 1e-12);
    }

    #[test]
    fn lift_with_spectral_jumps() {
        let rho = DensityMatrix::from_diagonal(&[1.0, 0.0, 0.0]).unwrap();
        let x = diag(&[-1.0, 0.5, 0.5]);
        let cert = lift(&rho, &x).unwrap();
        assert!(cert.residual <= 1e-10);
        assert_eq!(cert.lindbladian.jumps.len(), 2);
        assert!(cert.cp_margin >= -1e-9);
    }

    #[test]
    fn lift_rejects_outward_direction() {
        assert!(matches!(lift(&pure0(), &pauli_z()), Err(Error::NotInCone(_))));
    }

    #[test]
    fn lift_underflow() {
        let rho = DensityMatrix::from_diagonal(&[1.0 - 1e-9, 1e-9]).unwrap();
        let x = pauli_z() * c(1e9);
        assert!(matches!(lift(&rho, &x), Err(Error::EpsilonUnderflow(_))));
    }

    #[test]
    fn constant_path() {
        let rho = DensityMatrix::from_diagonal(&[0.6, 0.4, 0.0]).unwrap();
        let path = PathSample::new(vec![0.0, 0.5, 1.0], vec![rho.clone(); 3]).unwrap();
        let out = lift_path(&path, PathOptions::default()).unwrap();
        assert!(out.reconstruction_error < 1e-15);
        for g in &out.generators {
            assert!(max_abs(&lindblad::build(g).into_matrix()) < 1e-15);
        }
        assert!((out.integrability.int_inv_lambda - 2.5).abs() < 1e-12);
    }

    #[test]
    fn semigroup_path_reconstructs() {
        let l = lindblad::chain_lindbladian(&[0.5, 0.3, 0.2]).unwrap().scaled(0.05);
        let rho0 = DensityMatrix::new(random_density(3, 3, &mut seeded_rng(4))).unwrap();
        let run = |n: usize| {
            let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let states = times
                .iter()
                .map(|&t| lindblad::propagate(&l, &rho0, t).unwrap())
                .collect();
            let p = PathSample::new(times, states).unwrap();
            lift_path(&p, PathOptions::default()).unwrap().reconstruction_error
        };
        let e64 = run(64);
        let e128 = run(128);
        assert!(e64 <= 1e-3, "{e64}");
        assert!(e128 < 0.7 * e64, "{e64} {e128}");
    }

    #[test]
    fn boundary_exit_diverges() {
        let n = 41;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let states = times
            .iter()
            .map(|&t| DensityMatrix::from_diagonal(&[(1.0 + t) / 2.0, (1.0 - t) / 2.0]).unwrap())
            .collect();
        let p = PathSample::new(times, states).unwrap();
        let out = lift_path(&p, PathOptions::default()).unwrap();
        assert!(out.integrability.int_inv_lambda.is_infinite());
        // exact value of the integral of sqrt(2/(1-t)) over [0, 1] is 2 sqrt 2
        assert!((out.integrability.int_inv_sqrt_lambda - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(out.lambda_min[n - 1], 0.0);
        assert!(out.residuals[n - 1].is_none());
    }

    #[test]
    fn path_reports_bad_sample() {
        let good = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        let mut path = PathSample::new(vec![0.0, 1.0, 2.0], vec![pure0(), good.clone(), good]).unwrap();
        path.derivs = Some(vec![
            TangentVector::new(pauli_z()).unwrap(),
            TangentVector::new(pauli_z()).unwrap(),
            TangentVector::new(pauli_z()).unwrap(),
        ]);
        assert_eq!(
            lift_path(&path, PathOptions::default()),
            Err(Error::PathSampleNotInCone { index: 0 })
        );
    }

    #[test]
    fn finite_differences_are_second_order() {
        let times = [0.0, 0.1, 0.25, 0.3];
        let f = |t: f64| diag(&[t * t, 1.0 - t * t]);
        let states: Vec<CMatrix> = times.iter().map(|&t| f(t)).collect();
        let d = finite_difference_derivatives(&times, &states);
        for (i, &t) in times.iter().enumerate() {
            assert!(max_abs(&(&d[i] - diag(&[2.0 * t, -2.0 * t]))) < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lift_round_trip(seed in any::<u64>(), di in 0usize..4, deficient in any::<bool>()) {
            let d = [2, 3, 4, 8][di];
            let mut rng = seeded_rng(seed);
            let rank = if deficient { 1 + (seed as usize) % (d - 1) } else { d };
            let rho = DensityMatrix::new(random_density(d, rank, &mut rng)).unwrap();
            let x = random_cone_element(&rho, &mut rng);
            let cert = lift(&rho, &x).unwrap();
            prop_assert!(cert.residual <= LIFT_TOL, "residual {}", cert.residual);
            prop_assert!(cert.cp_margin >= -1e-9);
        }

        #[test]
        fn generator_images_are_in_cone(seed in any::<u64>(), rank in 1usize..3) {
            let mut rng = seeded_rng(seed);
            let rho = DensityMatrix::new(random_density(2, rank, &mut rng)).unwrap();
            let l = Lindbladian {
                dim: 2,
                hamiltonian: random_hermitian(2, &mut rng),
                jumps: vec![JumpTerm::new(crate::linalg::random::ginibre(2, 2, &mut rng), 1.0)],
                bilinear: None,
            };
            let x = lindblad::apply(&l, &rho).unwrap();
            prop_assert!(in_tangent_cone(&rho, &x, 1e-9).unwrap());
        }

        #[test]
        fn cone_is_closed_under_sums(seed in any::<u64>(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let mut rng = seeded_rng(seed);
            let rho = DensityMatrix::new(random_density(3, 1, &mut rng)).unwrap();
            let x = random_cone_element(&rho, &mut rng);
            let y = random_cone_element(&rho, &mut rng);
            prop_assert!(in_tangent_cone(&rho, &(x * c(a) + y * c(b)), 1e-9).unwrap());
        }

        #[test]
        fn cone_is_unitarily_covariant(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed);
            let rho = DensityMatrix::new(random_density(3, 2, &mut rng)).unwrap();
            let x = random_hermitian(3, &mut rng);
            let x = &x - identity(3) * (x.trace() / c(3.0));
            let u = haar_unitary(3, &mut rng);
            let rho_u = DensityMatrix::new(&u * rho.matrix() * u.adjoint()).unwrap();
            let x_u = linalg::hermitian_part(&(&u * &x * u.adjoint()));
            prop_assert_eq!(
                in_tangent_cone(&rho, &x, 1e-9).unwrap(),
                in_tangent_cone(&rho_u, &x_u, 1e-9).unwrap()
            );
        }

        #[test]
        fn witness_on_random_boundary_states(seed in any::<u64>()) {
            let mut rng = seeded_rng(seed);
            let rho = DensityMatrix::new(random_density(4, 2, &mut rng)).unwrap();
            let sd = support_projection(&rho, DEFAULT_EIG_TOL);
            // cone element with a rank-one perpendicular block, so the third block is nonempty
            let mut xa = random_hermitian(4, &mut rng);
            let g = crate::linalg::random::ginibre(2, 1, &mut rng);
            xa.view_mut((2, 2), (2, 2)).copy_from(&(&g * g.adjoint()));
            let tr = xa.trace().re;
            xa[(0, 0)] -= c(tr / 2.0);
            xa[(1, 1)] -= c(tr / 2.0);
            let x = linalg::hermitian_part(&(&sd.basis * xa * sd.basis.adjoint()));
            let w = second_order_witness(&rho, &x).unwrap();
            prop_assert!(w.eps_max > 0.0);
            for k in 1..=50 {
                let t = w.eps_max * k as f64 / 50.0;
                prop_assert!(min_eig(&curve(rho.matrix(), &x, &w.x2, t)) >= -1e-12);
            }
            prop_assert!(w.x2.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn nonconvexity_strictness() {
        assert!(in_tangent_cone(&pure0(), &pauli_x(), 1e-10).unwrap());
        assert!(linear_admissible(&pure0(), &pauli_x()).unwrap().is_none());
        let _ = trace_norm(&pauli_x());
    }
}
