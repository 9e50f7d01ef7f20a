//! GKSL generators: construction, exponentiation, stationary states and
//! gradient forms.
//!
//! Dissipators use the normalization `D_a(rho) = 2 a rho a^† - a^†a rho - rho a^†a`,
//! so amplitude damping with `a = |0><1|` decays populations as `e^{-2t}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::json::{matrix_serde, matrix_vec_serde};
use crate::linalg::{
    self, c, check_unitary, eigenvalues, eigh, frobenius, hermiticity_deviation, identity,
    is_cp, is_tp, ket_bra, max_abs, null_space, CMatrix, CVector,
    DensityMatrix, Superoperator, C64, DEFAULT_EIG_TOL, I,
};

/// Tolerance below which a superoperator eigenvalue counts as zero.
pub const NULL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpTerm {
    #[serde(with = "matrix_serde")]
    pub a: CMatrix,
    pub rate: f64,
}

impl JumpTerm {
    pub fn new(a: CMatrix, rate: f64) -> Self {
        Self { a, rate }
    }
}

/// Kossakowski-weighted sum `sum_jk gamma_jk L_{a_j, a_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearTerm {
    #[serde(with = "matrix_vec_serde")]
    pub ops: Vec<CMatrix>,
    #[serde(with = "matrix_serde")]
    pub kossakowski: CMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LindbladianRaw")]
pub struct Lindbladian {
    pub dim: usize,
    #[serde(with = "matrix_serde")]
    pub hamiltonian: CMatrix,
    pub jumps: Vec<JumpTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bilinear: Option<BilinearTerm>,
}

#[derive(Deserialize)]
struct LindbladianRaw {
    dim: usize,
    #[serde(with = "matrix_serde")]
    hamiltonian: CMatrix,
    #[serde(default)]
    jumps: Vec<JumpTerm>,
    #[serde(default)]
    bilinear: Option<BilinearTerm>,
}

impl TryFrom<LindbladianRaw> for Lindbladian {
    type Error = Error;
    fn try_from(r: LindbladianRaw) -> Result<Self> {
        let l = Lindbladian {
            dim: r.dim,
            hamiltonian: r.hamiltonian,
            jumps: r.jumps,
            bilinear: r.bilinear,
        };
        l.validate()?;
        Ok(l)
    }
}

impl Lindbladian {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            hamiltonian: CMatrix::zeros(dim, dim),
            jumps: Vec::new(),
            bilinear: None,
        }
    }

    pub fn hamiltonian(h: CMatrix) -> Result<Self> {
        let l = Self {
            dim: h.nrows(),
            hamiltonian: h,
            jumps: Vec::new(),
            bilinear: None,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn from_jumps(dim: usize, jumps: Vec<JumpTerm>) -> Result<Self> {
        let l = Self {
            dim,
            hamiltonian: CMatrix::zeros(dim, dim),
            jumps,
            bilinear: None,
        };
        l.validate()?;
        Ok(l)
    }

    /// Single dissipator with unit rate.
    pub fn single_jump(a: CMatrix) -> Self {
        let dim = a.nrows();
        Self {
            dim,
            hamiltonian: CMatrix::zeros(dim, dim),
            jumps: vec![JumpTerm::new(a, 1.0)],
            bilinear: None,
        }
    }

    pub fn with_hamiltonian(mut self, h: CMatrix) -> Self {
        self.hamiltonian = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::DimensionMismatch("dim must be positive".into()));
        }
        let check_shape = |m: &CMatrix, what: &str| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{what} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !linalg::is_finite(m) {
                return Err(Error::NonFinite);
            }
            Ok(())
        };
        check_shape(&self.hamiltonian, "hamiltonian")?;
        let herm_tol = linalg::HERM_TOL_PER_DIM * d as f64 * (1.0 + max_abs(&self.hamiltonian));
        let dev = hermiticity_deviation(&self.hamiltonian);
        if dev > herm_tol {
            return Err(Error::NotHermitian {
                deviation: dev,
                tol: herm_tol,
            });
        }
        for (k, j) in self.jumps.iter().enumerate() {
            check_shape(&j.a, &format!("jump {k}"))?;
            if !(j.rate >= 0.0 && j.rate.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "jump {k} has rate {}, rates must be finite and nonnegative",
                    j.rate
                )));
            }
        }
        if let Some(b) = &self.bilinear {
            let m = b.ops.len();
            if b.kossakowski.nrows() != m || b.kossakowski.ncols() != m {
                return Err(Error::DimensionMismatch(format!(
                    "kossakowski matrix must be {m}x{m} for {m} operators"
                )));
            }
            for (k, op) in b.ops.iter().enumerate() {
                check_shape(op, &format!("bilinear op {k}"))?;
            }
            if m > 0 {
                let dev = hermiticity_deviation(&b.kossakowski);
                let tol = linalg::HERM_TOL_PER_DIM * m as f64 * (1.0 + max_abs(&b.kossakowski));
                if dev > tol {
                    return Err(Error::NotHermitian {
                        deviation: dev,
                        tol,
                    });
                }
                let min = linalg::min_eig(&b.kossakowski);
                if min < -DEFAULT_EIG_TOL {
                    return Err(Error::NotPsd { min_eig: min });
                }
            }
        }
        Ok(())
    }

    /// Generator of the sum of the two semigroups' generators.
    pub fn plus(&self, other: &Lindbladian) -> Result<Lindbladian> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot add generators on dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        let bilinear = match (&self.bilinear, &other.bilinear) {
            (None, None) => None,
            (Some(b), None) | (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => {
                let (m, n) = (a.ops.len(), b.ops.len());
                let mut k = CMatrix::zeros(m + n, m + n);
                k.view_mut((0, 0), (m, m)).copy_from(&a.kossakowski);
                k.view_mut((m, m), (n, n)).copy_from(&b.kossakowski);
                Some(BilinearTerm {
                    ops: a.ops.iter().chain(&b.ops).cloned().collect(),
                    kossakowski: k,
                })
            }
        };
        Ok(Lindbladian {
            dim: self.dim,
            hamiltonian: &self.hamiltonian + &other.hamiltonian,
            jumps: self.jumps.iter().chain(&other.jumps).cloned().collect(),
            bilinear,
        })
    }

    /// Multiply the generator by a nonnegative scalar.
    pub fn scaled(&self, s: f64) -> Lindbladian {
        Lindbladian {
            dim: self.dim,
            hamiltonian: &self.hamiltonian * c(s),
            jumps: self
                .jumps
                .iter()
                .map(|j| JumpTerm::new(j.a.clone(), j.rate * s))
                .collect(),
            bilinear: self.bilinear.as_ref().map(|b| BilinearTerm {
                ops: b.ops.clone(),
                kossakowski: &b.kossakowski * c(s),
            }),
        }
    }

    /// Same generator without its Hamiltonian part.
    pub fn dissipative_part(&self) -> Lindbladian {
        Lindbladian {
            hamiltonian: CMatrix::zeros(self.dim, self.dim),
            ..self.clone()
        }
    }

    pub fn superop(&self) -> Superoperator {
        build(self)
    }
}

/// Superoperator of `rho -> 2 a rho a^† - a^†a rho - rho a^†a`.
pub fn dissipator(a: &CMatrix) -> Superoperator {
    let d = a.nrows();
    let id = identity(d);
    let ada = a.adjoint() * a;
    let m = linalg::linear_map_matrix(a, &a.adjoint()) * c(2.0)
        - linalg::linear_map_matrix(&ada, &id)
        - linalg::linear_map_matrix(&id, &ada);
    Superoperator::new(d, m).expect("square jump operator")
}

/// Schrödinger-picture bilinear dissipator `rho -> 2 b rho a^† - a^†b rho - rho a^†b`.
///
/// This is the trace dual of the observable map
/// `x -> 2 a^† x b - a^†b x - x a^†b` (see [`bilinear_dissipator_heisenberg`]),
/// and satisfies `bilinear_dissipator(a, a) == dissipator(a)`.
pub fn bilinear_dissipator(a: &CMatrix, b: &CMatrix) -> Superoperator {
    let d = a.nrows();
    let id = identity(d);
    let adb = a.adjoint() * b;
    let m = linalg::linear_map_matrix(b, &a.adjoint()) * c(2.0)
        - linalg::linear_map_matrix(&adb, &id)
        - linalg::linear_map_matrix(&id, &adb);
    Superoperator::new(d, m).expect("square operators")
}

/// Observable-picture bilinear dissipator `x -> 2 a^† x b - a^†b x - x a^†b`.
pub fn bilinear_dissipator_heisenberg(a: &CMatrix, b: &CMatrix) -> Superoperator {
    let d = a.nrows();
    let id = identity(d);
    let adb = a.adjoint() * b;
    let m = linalg::linear_map_matrix(&a.adjoint(), b) * c(2.0)
        - linalg::linear_map_matrix(&adb, &id)
        - linalg::linear_map_matrix(&id, &adb);
    Superoperator::new(d, m).expect("square operators")
}

/// Superoperator of `rho -> -i[H, rho]`.
pub fn hamiltonian_superop(h: &CMatrix) -> Superoperator {
    let d = h.nrows();
    let id = identity(d);
    let m = (linalg::linear_map_matrix(h, &id) - linalg::linear_map_matrix(&id, h)) * (-I);
    Superoperator::new(d, m).expect("square hamiltonian")
}

pub fn build(l: &Lindbladian) -> Superoperator {
    let mut s = hamiltonian_superop(&l.hamiltonian).into_matrix();
    for j in &l.jumps {
        if j.rate != 0.0 {
            s += dissipator(&j.a).into_matrix() * c(j.rate);
        }
    }
    if let Some(b) = &l.bilinear {
        for (j, aj) in b.ops.iter().enumerate() {
            for (k, ak) in b.ops.iter().enumerate() {
                let g = b.kossakowski[(j, k)];
                if g != C64::new(0.0, 0.0) {
                    s += bilinear_dissipator(aj, ak).into_matrix() * g;
                }
            }
        }
    }
    Superoperator::new(l.dim, s).expect("validated generator")
}

/// Action of the generator on an operator, evaluated without forming the
/// superoperator.
pub fn apply_operator(l: &Lindbladian, x: &CMatrix) -> Result<CMatrix> {
    if x.nrows() != l.dim || x.ncols() != l.dim {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{}, generator acts on dimension {}",
            x.nrows(),
            x.ncols(),
            l.dim
        )));
    }
    let h = &l.hamiltonian;
    let mut out = (h * x - x * h) * (-I);
    for j in &l.jumps {
        if j.rate == 0.0 {
            continue;
        }
        let ad = j.a.adjoint();
        let ada = &ad * &j.a;
        out += (&j.a * x * &ad * c(2.0) - &ada * x - x * &ada) * c(j.rate);
    }
    if let Some(b) = &l.bilinear {
        for (jj, aj) in b.ops.iter().enumerate() {
            let ajd = aj.adjoint();
            for (kk, ak) in b.ops.iter().enumerate() {
                let g = b.kossakowski[(jj, kk)];
                if g == C64::new(0.0, 0.0) {
                    continue;
                }
                let adb = &ajd * ak;
                out += (ak * x * &ajd * c(2.0) - &adb * x - x * &adb) * g;
            }
        }
    }
    Ok(out)
}

/// `L(rho)`, returned as a Hermitian (traceless) matrix.
pub fn apply(l: &Lindbladian, rho: &DensityMatrix) -> Result<CMatrix> {
    apply_operator(l, rho.matrix())
}

/// `exp(t L)` as a superoperator.
pub fn propagator(l: &Lindbladian, t: f64) -> Result<Superoperator> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "propagation time must be finite and nonnegative, got {t}"
        )));
    }
    Ok(build(l).exp(t))
}

/// Density after time `t`, re-validated with a tolerance of `1e-9`.
pub fn propagate(l: &Lindbladian, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let p = propagator(l, t)?;
    propagate_with(&p, rho)
}

/// Apply a precomputed propagator and validate the result.
pub fn propagate_with(p: &Superoperator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let out = p.apply(rho.matrix())?;
    DensityMatrix::with_tol(out, 1e-9)
}

/// Jump operators whose dissipators sum to `R_sigma - id`.
///
/// With `sigma = sum_i s_i |v_i><v_i|`, the jumps are `sqrt(s_i) |v_i><j|`
/// at rate 1/2 for every basis index `j`.
pub fn replacer_generator(sigma: &DensityMatrix) -> Lindbladian {
    let d = sigma.dim();
    let (vals, vecs) = eigh(sigma.matrix());
    let mut jumps = Vec::new();
    for (i, &s) in vals.iter().enumerate() {
        if s <= 0.0 {
            continue;
        }
        let v = vecs.column(i).into_owned();
        for j in 0..d {
            let mut e = CVector::zeros(d);
            e[j] = c(1.0);
            let a = (&v * e.adjoint()) * c(s.sqrt());
            jumps.push(JumpTerm::new(a, 0.5));
        }
    }
    Lindbladian {
        dim: d,
        hamiltonian: CMatrix::zeros(d, d),
        jumps,
        bilinear: None,
    }
}

/// Superoperator of the replacer channel `X -> tr(X) sigma`.
pub fn replacer_channel(sigma: &CMatrix) -> Superoperator {
    let s = sigma.clone();
    linalg::superop_from_action(move |x| &s * x.trace(), sigma.nrows())
}

/// Projection onto the diagonal (infinite-time dephasing).
pub fn diagonal_projection(d: usize) -> Superoperator {
    linalg::superop_from_action(
        |x| {
            let mut out = CMatrix::zeros(d, d);
            for i in 0..d {
                out[(i, i)] = x[(i, i)];
            }
            out
        },
        d,
    )
}

/// Generator with stationary state `diag(beta, 1) / (1 + beta)` on a qubit.
pub fn detailed_balance_pair(beta: f64) -> Result<Lindbladian> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    Lindbladian::from_jumps(
        2,
        vec![
            JumpTerm::new(ket_bra(0, 1, 2), beta.sqrt()),
            JumpTerm::new(ket_bra(1, 0, 2), 1.0 / beta.sqrt()),
        ],
    )
}

/// Nearest-neighbour detailed-balance chain with stationary state `diag(mu)`.
pub fn chain_lindbladian(mu: &[f64]) -> Result<Lindbladian> {
    if mu.is_empty() {
        return Err(Error::InvalidParameter("mu must be nonempty".into()));
    }
    if let Some(k) = mu.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mu[{k}] = {} must be strictly positive",
            mu[k]
        )));
    }
    let sum: f64 = mu.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("mu sums to {sum}, expected 1")));
    }
    let d = mu.len();
    let mut jumps = Vec::with_capacity(2 * d);
    for r in 0..d.saturating_sub(1) {
        let beta = mu[r] / mu[r + 1];
        jumps.push(JumpTerm::new(ket_bra(r, r + 1, d), beta.sqrt()));
        jumps.push(JumpTerm::new(ket_bra(r + 1, r, d), 1.0 / beta.sqrt()));
    }
    Lindbladian::from_jumps(d, jumps)
}

/// Dimension of the numerical kernel of the generator.
pub fn kernel_dim(l: &Lindbladian) -> usize {
    null_space(build(l).matrix(), NULL_TOL).ncols()
}

/// Stationary densities spanning the kernel of the generator.
///
/// The kernel is Hermitized and each element split into its positive and
/// negative parts, which are again stationary for the trace-preserving
/// positive semigroup. A linearly independent family is then picked,
/// lowest rank first, so degenerate kernels report extreme points where
/// this decomposition finds them.
pub fn stationary_states(l: &Lindbladian) -> Vec<DensityMatrix> {
    let d = l.dim;
    let s = build(l);
    let kernel = null_space(s.matrix(), NULL_TOL);
    let kdim = kernel.ncols();
    if kdim == 0 {
        return Vec::new();
    }

    let mut herm: Vec<CMatrix> = Vec::new();
    for k in 0..kdim {
        let m = linalg::devectorize(&kernel.column(k).into_owned(), d).expect("square kernel");
        herm.push(linalg::hermitian_part(&m));
        herm.push(linalg::hermitian_part(&(&m * I)));
    }

    let mut candidates: Vec<(usize, CMatrix)> = Vec::new();
    let rank_tol = 1e-9;
    for h in herm {
        if frobenius(&h) < 1e-10 {
            continue;
        }
        let (vals, vecs) = eigh(&h);
        let pos = linalg::spectral_apply(&vals, &vecs, |x| c(if x > rank_tol { x } else { 0.0 }));
        let neg = linalg::spectral_apply(&vals, &vecs, |x| c(if x < -rank_tol { -x } else { 0.0 }));
        for part in [pos, neg] {
            let tr = part.trace().re;
            if tr <= 1e-9 {
                continue;
            }
            let rho = part / c(tr);
            let residual = frobenius(&s.apply(&rho).expect("matching dims"));
            if residual > 1e-7 {
                continue;
            }
            let rank = linalg::eigvalsh(&rho).iter().filter(|&&x| x > rank_tol).count();
            candidates.push((rank, rho));
        }
    }
    candidates.sort_by_key(|(rank, _)| *rank);

    // Greedy linear independence in the real space of Hermitian matrices.
    let mut chosen: Vec<CMatrix> = Vec::new();
    let mut ortho: Vec<CMatrix> = Vec::new();
    for (_, rho) in candidates {
        if chosen.len() == kdim {
            break;
        }
        let mut r = rho.clone();
        for q in &ortho {
            let proj = linalg::hs_inner(q, &r).re;
            r -= q * c(proj);
        }
        let n = frobenius(&r);
        if n > 1e-6 {
            ortho.push(r / c(n));
            chosen.push(rho);
        }
    }
    chosen
        .into_iter()
        .filter_map(|m| DensityMatrix::with_tol(m, 1e-8).ok())
        .collect()
}

/// `min { -Re lambda : |lambda| > NULL_TOL }` over the generator spectrum,
/// or 0 when the generator has no nonzero eigenvalue.
pub fn spectral_gap(l: &Lindbladian) -> Result<f64> {
    let ev = eigenvalues(build(l).matrix())?;
    let gap = ev
        .iter()
        .filter(|z| z.norm() > NULL_TOL)
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);
    Ok(if gap.is_finite() { gap } else { 0.0 })
}

/// Conjugate every part of the generator by `U`: `a -> U^† a U`,
/// `H -> U^† H U`. The result has superoperator `Ad_{U^†} S Ad_U`.
pub fn conjugate(l: &Lindbladian, u: &CMatrix) -> Result<Lindbladian> {
    if u.nrows() != l.dim {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {}x{}, generator acts on dimension {}",
            u.nrows(),
            u.ncols(),
            l.dim
        )));
    }
    check_unitary(u, 1e-10)?;
    let ud = u.adjoint();
    let conj = |m: &CMatrix| &ud * m * u;
    Ok(Lindbladian {
        dim: l.dim,
        hamiltonian: linalg::hermitian_part(&conj(&l.hamiltonian)),
        jumps: l
            .jumps
            .iter()
            .map(|j| JumpTerm::new(conj(&j.a), j.rate))
            .collect(),
        bilinear: l.bilinear.as_ref().map(|b| BilinearTerm {
            ops: b.ops.iter().map(conj).collect(),
            kossakowski: b.kossakowski.clone(),
        }),
    })
}

/// True iff the maximally mixed state is stationary.
pub fn unital_fixed_point_check(l: &Lindbladian) -> bool {
    unital_residual(l) <= 1e-12
}

/// `max |L(I/d)|`.
pub fn unital_residual(l: &Lindbladian) -> f64 {
    let mm = identity(l.dim) / c(l.dim as f64);
    max_abs(&apply_operator(l, &mm).expect("matching dims"))
}

/// Observable-picture generator: the adjoint of the superoperator under the
/// trace pairing.
pub fn heisenberg(l: &Lindbladian) -> Superoperator {
    build(l).adjoint()
}

/// Gradient form `Gamma(x, y) = L*(x^† y) - L*(x)^† y - x^† L*(y)` of the
/// observable-picture generator `L*`.
pub fn gamma_form(l: &Lindbladian, x: &CMatrix, y: &CMatrix) -> Result<CMatrix> {
    let h = heisenberg(l);
    gamma_form_with(&h, x, y)
}

/// Gradient form for a precomputed observable-picture generator.
pub fn gamma_form_with(h: &Superoperator, x: &CMatrix, y: &CMatrix) -> Result<CMatrix> {
    let xd = x.adjoint();
    Ok(h.apply(&(&xd * y))? - h.apply(x)?.adjoint() * y - &xd * h.apply(y)?)
}

/// Relative least-squares residual of `a` against `span{1, b_1, ..., b_m}`.
pub fn gamma_span_residual(a: &CMatrix, basis: &[CMatrix]) -> Result<f64> {
    let d = a.nrows();
    for b in basis {
        if b.nrows() != d || b.ncols() != d {
            return Err(Error::DimensionMismatch(
                "span basis elements must match the operator dimension".into(),
            ));
        }
    }
    let na = frobenius(a);
    if na == 0.0 {
        return Ok(0.0);
    }
    let mut cols = vec![linalg::vectorize(&identity(d))];
    cols.extend(basis.iter().map(linalg::vectorize));
    let m = CMatrix::from_columns(&cols);
    let target = linalg::vectorize(a);
    // Orthonormal basis of the column space through the Gram matrix.
    let gram = m.adjoint() * &m;
    let (vals, vecs) = eigh(&gram);
    let vmax = vals.last().copied().unwrap_or(0.0);
    let mut resid = target.clone();
    for (k, &v) in vals.iter().enumerate() {
        if v <= 1e-12 * vmax.max(1.0) {
            continue;
        }
        let q = &m * vecs.column(k) / c(v.sqrt());
        let coeff = q.dotc(&target);
        resid -= q * coeff;
    }
    Ok(resid.norm() / na)
}

/// `a` lies in `span{1, b_1, ..., b_m}` (relative residual below `1e-8`).
pub fn gamma_span_criterion(a: &CMatrix, basis: &[CMatrix]) -> Result<bool> {
    Ok(gamma_span_residual(a, basis)? < 1e-8)
}

/// Minimum eigenvalue of the Choi matrix compressed to the orthocomplement
/// of the maximally entangled vector. Nonnegative exactly for generators of
/// completely positive semigroups (up to the Hamiltonian part, which this
/// compression removes).
pub fn conditional_cp_margin(s: &Superoperator) -> f64 {
    let d = s.dim();
    let ch = linalg::choi(s).mat;
    let mut omega = CMatrix::zeros(1, d * d);
    for i in 0..d {
        omega[(0, i * d + i)] = c(1.0);
    }
    let v = null_space(&omega, 1e-12);
    linalg::min_eig(&linalg::hermitian_part(&(v.adjoint() * ch * &v)))
}

/// A CPTP map, checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumChannel {
    pub superop: Superoperator,
    pub cp_tol: f64,
    pub tp_tol: f64,
}

impl QuantumChannel {
    pub fn new(superop: Superoperator, cp_tol: f64, tp_tol: f64) -> Result<Self> {
        if !is_tp(&superop, tp_tol) {
            return Err(Error::InvalidParameter("map is not trace preserving".into()));
        }
        if !is_cp(&superop, cp_tol) {
            let m = linalg::choi(&superop).min_eig();
            return Err(Error::NotPsd { min_eig: m });
        }
        Ok(Self {
            superop,
            cp_tol,
            tp_tol,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            superop: Superoperator::identity(d),
            cp_tol: 1e-9,
            tp_tol: 1e-9,
        }
    }

    pub fn dim(&self) -> usize {
        self.superop.dim()
    }

    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        self.superop.apply(rho)
    }

    pub fn then(&self, next: &QuantumChannel) -> QuantumChannel {
        QuantumChannel {
            superop: next.superop.compose(&self.superop),
            cp_tol: self.cp_tol.max(next.cp_tol),
            tp_tol: self.tp_tol.max(next.tp_tol),
        }
    }
}
