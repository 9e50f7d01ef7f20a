//! Lie-algebra rank tests: does a resource set generate `su(d)`?

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::json::matrix_vec_serde;
use crate::linalg::random::{haar_unitary, stream_rng};
use crate::linalg::{
    self, c, commutator, embed_qubit_op, hermiticity_deviation, identity, ket_bra, max_abs,
    pauli_x, pauli_z, CMatrix, CVector, I,
};

/// Norm below which a Gram-Schmidt residual is discarded.
pub const GS_DROP_TOL: f64 = 1e-9;
/// Rounds without growth after which the closure counts as saturated.
pub const STAGNANT_ROUNDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSet {
    pub dim: usize,
    #[serde(with = "matrix_vec_serde")]
    pub elements: Vec<CMatrix>,
    #[serde(default)]
    pub adjoint_closed: bool,
}

impl ResourceSet {
    pub fn new(dim: usize, elements: Vec<CMatrix>) -> Self {
        Self {
            dim,
            elements,
            adjoint_closed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::InvalidParameter("resource set is empty".into()));
        }
        for (k, e) in self.elements.iter().enumerate() {
            if e.nrows() != self.dim || e.ncols() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "element {k} is {}x{}, expected {d}x{d}",
                    e.nrows(),
                    e.ncols(),
                    d = self.dim
                )));
            }
            if !linalg::is_finite(e) {
                return Err(Error::NonFinite);
            }
        }
        if self.adjoint_closed {
            for (k, e) in self.elements.iter().enumerate() {
                let ad = e.adjoint();
                let tol = 1e-10 * (1.0 + max_abs(e));
                if !self.elements.iter().any(|f| max_abs(&(f - &ad)) <= tol) {
                    return Err(Error::InvalidParameter(format!(
                        "set is flagged adjoint-closed but the adjoint of element {k} is missing"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieClosureReport {
    #[serde(with = "matrix_vec_serde")]
    pub basis: Vec<CMatrix>,
    pub dim_found: usize,
    pub depth_used: usize,
    pub is_hormander: bool,
}

/// Real orthonormal family under `<A, B> = Re tr(A^† B)`.
#[derive(Debug, Clone, Default)]
struct RealBasis {
    vecs: Vec<CMatrix>,
}

impl RealBasis {
    /// Try to extend the basis with `m`; returns true if it grew.
    fn push(&mut self, m: &CMatrix) -> bool {
        let n = linalg::frobenius(m);
        if n < GS_DROP_TOL {
            return false;
        }
        let mut r = m / c(n);
        // two passes for numerical stability
        for _ in 0..2 {
            for q in &self.vecs {
                let p = linalg::hs_inner(q, &r).re;
                r -= q * c(p);
            }
        }
        let rn = linalg::frobenius(&r);
        if rn < GS_DROP_TOL {
            return false;
        }
        self.vecs.push(r / c(rn));
        true
    }

    fn residual(&self, m: &CMatrix) -> f64 {
        let mut r = m.clone();
        for q in &self.vecs {
            let p = linalg::hs_inner(q, &r).re;
            r -= q * c(p);
        }
        linalg::frobenius(&r)
    }
}

fn traceless(m: &CMatrix) -> CMatrix {
    let d = m.nrows();
    m - identity(d) * (m.trace() / c(d as f64))
}

/// Anti-Hermitian traceless generators of the Lie algebra spanned by `a`.
///
/// Hermitian input is multiplied by `i`; anti-Hermitian input is used as is;
/// a general element contributes both `i (a + a^†)/2` and `(a - a^†)/2`.
pub fn lie_generators(a: &CMatrix) -> Vec<CMatrix> {
    let scale = 1e-12 * (1.0 + max_abs(a));
    let herm = linalg::hermitian_part(a);
    let anti = (a - a.adjoint()) * c(0.5);
    let mut out = Vec::new();
    if hermiticity_deviation(a) <= scale {
        out.push(traceless(&(herm * I)));
    } else if max_abs(&herm) <= scale {
        out.push(traceless(&anti));
    } else {
        out.push(traceless(&(herm * I)));
        out.push(traceless(&anti));
    }
    out
}

pub fn lie_closure(s: &ResourceSet, max_depth: usize) -> Result<LieClosureReport> {
    s.validate()?;
    if max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    let d = s.dim;
    let target = d * d - 1;

    let mut gens = RealBasis::default();
    for e in &s.elements {
        for g in lie_generators(e) {
            gens.push(&g);
        }
    }
    let mut basis = gens.clone();
    let mut depth_used = 0;
    let mut stagnant = 0;
    while basis.vecs.len() < target && depth_used < max_depth && stagnant < STAGNANT_ROUNDS {
        depth_used += 1;
        let before = basis.vecs.len();
        let current = basis.vecs.clone();
        'round: for g in &gens.vecs {
            for b in &current {
                basis.push(&commutator(g, b));
                if basis.vecs.len() == target {
                    break 'round;
                }
            }
        }
        if basis.vecs.len() == before {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
    }
    let dim_found = basis.vecs.len();
    Ok(LieClosureReport {
        basis: basis.vecs,
        dim_found,
        depth_used,
        is_hormander: dim_found == target,
    })
}

/// `{X_j, Z_j} ∪ {Z_j Z_{j+1}}` on `k` qubits, as anti-Hermitian generators.
pub fn standard_two_local_set(k: usize) -> ResourceSet {
    let mut elements = Vec::new();
    for j in 0..k {
        elements.push(embed_qubit_op(&pauli_x(), j, k) * I);
        elements.push(embed_qubit_op(&pauli_z(), j, k) * I);
    }
    for j in 0..k.saturating_sub(1) {
        elements.push(embed_qubit_op(&pauli_z(), j, k) * embed_qubit_op(&pauli_z(), j + 1, k) * I);
    }
    ResourceSet::new(1 << k, elements)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitProbeReport {
    /// `|0><1|` lies in the real span of the sampled orbit.
    pub contains_e01: bool,
    /// `|0><1|` lies in the complex span of the sampled orbit.
    pub contains_e01_complex: bool,
    /// Real dimension of the sampled span.
    pub span_dim: usize,
    pub samples_used: usize,
    pub residual_real: f64,
    pub residual_complex: f64,
}

/// Randomized span check of the unitary orbit `{U^† a U} ∪ {U^† a^† U}` of
/// the traceless part of `a`.
///
/// Sampling stops at `n_samples`, when the span reaches the full traceless
/// space, or after ten consecutive samples without growth. The result is
/// evidence, not proof.
pub fn orbit_span_probe(a: &CMatrix, n_samples: usize, seed: u64) -> Result<OrbitProbeReport> {
    let d = a.nrows();
    if d < 2 || a.ncols() != d {
        return Err(Error::DimensionMismatch(
            "orbit probe needs a square operator of dimension at least 2".into(),
        ));
    }
    let a0 = traceless(a);
    let full = 2 * (d * d - 1);
    let mut span = RealBasis::default();
    let mut used = 0;
    let mut idle = 0;
    for i in 0..n_samples {
        if span.vecs.len() == full || idle >= 10 {
            break;
        }
        let u = haar_unitary(d, &mut stream_rng(seed, i as u64));
        let ud = u.adjoint();
        let before = span.vecs.len();
        span.push(&(&ud * &a0 * &u));
        span.push(&(&ud * a0.adjoint() * &u));
        idle = if span.vecs.len() == before { idle + 1 } else { 0 };
        used += 1;
    }
    let e01 = ket_bra(0, 1, d);
    let residual_real = span.residual(&e01);

    // complex span: orthonormalize with the full Hermitian inner product
    let mut cplx: Vec<CVector> = Vec::new();
    for v in &span.vecs {
        let mut r = linalg::vectorize(v);
        for q in &cplx {
            let p = q.dotc(&r);
            r -= q * p;
        }
        let n = r.norm();
        if n > GS_DROP_TOL {
            cplx.push(r / c(n));
        }
    }
    let mut r = linalg::vectorize(&e01);
    for q in &cplx {
        let p = q.dotc(&r);
        r -= q * p;
    }
    let residual_complex = r.norm();

    Ok(OrbitProbeReport {
        contains_e01: residual_real < 1e-8,
        contains_e01_complex: residual_complex < 1e-8,
        span_dim: span.vecs.len(),
        samples_used: used,
        residual_real,
        residual_complex,
    })
}
