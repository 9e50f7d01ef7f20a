//! Transport of diagonal states on `k` qubits using amplitude damping on
//! the first register, basis transpositions and (optionally) unitaries.
//!
//! A plan first merges all mass into `|0...0>` and then builds the target
//! pair by pair, where pair `m` is the index couple `(m, N + m)` with
//! `N = 2^{k-1}` and the damped register is the most significant qubit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hormander::{lie_closure, standard_two_local_set};
use crate::linalg::{
    self, check_unitary, eigh, embed_qubit_op, ket_bra, json::matrix_serde, CMatrix, DensityMatrix,
};
use crate::lindblad::{self, Lindbladian};

/// Default endpoint tolerance in trace distance.
pub const PLAN_TOL: f64 = 1e-8;
/// Masses and ratios at or below this are treated as zero while planning.
const MASS_EPS: f64 = 1e-15;
const LEDGER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanStep {
    ApplyUnitary {
        #[serde(with = "matrix_serde")]
        unitary: CMatrix,
    },
    /// Damp `register` with retention `e^{-2t}`; zero retention is the
    /// infinite-time limit.
    AmplitudeDamp { register: usize, retention: f64 },
    Transposition {
        i: usize,
        j: usize,
        sparse_adjacent: bool,
    },
    /// Full dephasing of the listed registers.
    DephaseDiagonal { registers: Vec<usize> },
}

impl PlanStep {
    pub fn transposition(i: usize, j: usize) -> Self {
        PlanStep::Transposition {
            i,
            j,
            sparse_adjacent: i.abs_diff(j) == 1,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        let dim = 1usize << k;
        match self {
            PlanStep::ApplyUnitary { unitary } => {
                if unitary.nrows() != dim || unitary.ncols() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "unitary is {}x{}, plan acts on dimension {dim}",
                        unitary.nrows(),
                        unitary.ncols()
                    )));
                }
                check_unitary(unitary, 1e-9)
            }
            PlanStep::AmplitudeDamp { register, retention } => {
                if *register >= k {
                    return Err(Error::InvalidParameter(format!(
                        "register {register} out of range for {k} qubits"
                    )));
                }
                if !(0.0..=1.0).contains(retention) {
                    return Err(Error::InvalidParameter(format!(
                        "retention must lie in [0, 1], got {retention}"
                    )));
                }
                Ok(())
            }
            PlanStep::Transposition { i, j, .. } => {
                if i == j || *i >= dim || *j >= dim {
                    return Err(Error::InvalidParameter(format!(
                        "transposition ({i}, {j}) needs distinct indices below {dim}"
                    )));
                }
                Ok(())
            }
            PlanStep::DephaseDiagonal { registers } => {
                if let Some(r) = registers.iter().find(|&&r| r >= k) {
                    return Err(Error::InvalidParameter(format!(
                        "register {r} out of range for {k} qubits"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanCounts {
    pub infinite_damps: usize,
    pub finite_damps: usize,
    pub transpositions: usize,
    /// Cost when only adjacent transpositions are available: `(i, j)`
    /// decomposes into `2|i - j| - 1` adjacent swaps.
    pub adjacent_transpositions: usize,
    pub unitaries: usize,
    pub dephasings: usize,
}

pub fn count_report(steps: &[PlanStep]) -> PlanCounts {
    let mut c = PlanCounts::default();
    for s in steps {
        match s {
            PlanStep::ApplyUnitary { .. } => c.unitaries += 1,
            PlanStep::AmplitudeDamp { retention, .. } => {
                if *retention == 0.0 {
                    c.infinite_damps += 1;
                } else {
                    c.finite_damps += 1;
                }
            }
            PlanStep::Transposition { i, j, .. } => {
                c.transpositions += 1;
                c.adjacent_transpositions += 2 * i.abs_diff(*j) - 1;
            }
            PlanStep::DephaseDiagonal { .. } => c.dephasings += 1,
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Index into the plan's step list of the step just applied.
    pub step: usize,
    /// Ratios `d_{N+m} / (d_m + d_{N+m})` of the matched pairs, in slot
    /// order.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioLedger {
    pub entries: Vec<LedgerEntry>,
}

impl RatioLedger {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.first_violation(tol).is_none()
    }

    pub fn first_violation(&self, tol: f64) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.ratios.windows(2).any(|w| w[1] < w[0] - tol))
            .map(|e| e.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub k: usize,
    pub dim: usize,
    pub steps: Vec<PlanStep>,
    pub counts: PlanCounts,
    #[serde(default)]
    pub ledger: RatioLedger,
}

impl TransportPlan {
    pub fn new(k: usize, steps: Vec<PlanStep>) -> Result<Self> {
        check_k(k)?;
        for s in &steps {
            s.validate(k)?;
        }
        Ok(Self {
            k,
            dim: 1 << k,
            counts: count_report(&steps),
            steps,
            ledger: RatioLedger::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_k(self.k)?;
        if self.dim != 1 << self.k {
            return Err(Error::InvalidParameter(format!(
                "dim {} does not equal 2^{}",
                self.dim, self.k
            )));
        }
        for s in &self.steps {
            s.validate(self.k)?;
        }
        if count_report(&self.steps) != self.counts {
            return Err(Error::InvalidParameter("counts do not match the steps".into()));
        }
        Ok(())
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > 12 {
        return Err(Error::InvalidParameter(format!(
            "qubit count must be in 1..=12, got {k}"
        )));
    }
    Ok(())
}

fn check_distribution(v: &[f64], name: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must have finite nonnegative entries"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("{name} sums to {s}, expected 1")));
    }
    Ok(())
}

/// Step list plus a planning-time simulation of the diagonal.
struct Builder {
    k: usize,
    diag: Vec<f64>,
    steps: Vec<PlanStep>,
    ledger: RatioLedger,
}

impl Builder {
    fn new(k: usize, diag: Vec<f64>) -> Self {
        Self {
            k,
            diag,
            steps: Vec::new(),
            ledger: RatioLedger::default(),
        }
    }

    fn half(&self) -> usize {
        1 << (self.k - 1)
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.diag.swap(i, j);
        self.steps.push(PlanStep::transposition(i, j));
    }

    fn damp(&mut self, retention: f64) {
        let n = self.half();
        for m in 0..n {
            let moved = (1.0 - retention) * self.diag[n + m];
            self.diag[m] += moved;
            self.diag[n + m] -= moved;
        }
        self.steps.push(PlanStep::AmplitudeDamp {
            register: 0,
            retention,
        });
    }

    fn ratio(&self, m: usize) -> f64 {
        let n = self.half();
        let total = self.diag[m] + self.diag[n + m];
        if total <= MASS_EPS {
            0.0
        } else {
            self.diag[n + m] / total
        }
    }

    fn record(&mut self, matched: &[usize]) -> Result<()> {
        let ratios: Vec<f64> = matched.iter().map(|&m| self.ratio(m)).collect();
        let step = self.steps.len().saturating_sub(1);
        if ratios.windows(2).any(|w| w[1] < w[0] - LEDGER_TOL) {
            return Err(Error::LedgerViolation { step });
        }
        self.ledger.entries.push(LedgerEntry { step, ratios });
        Ok(())
    }

    fn finish(self) -> TransportPlan {
        TransportPlan {
            k: self.k,
            dim: 1 << self.k,
            counts: count_report(&self.steps),
            steps: self.steps,
            ledger: self.ledger,
        }
    }

    /// Merge everything into index 0: damp fully, fold the upper half of
    /// the occupied block onto the empty upper register half, repeat.
    fn merge_to_pure(&mut self) {
        let n = self.half();
        self.damp(0.0);
        let mut occupied = n;
        while occupied > 1 {
            let half = occupied / 2;
            for i in 0..half {
                self.swap(half + i, n + i);
            }
            self.damp(0.0);
            occupied = half;
        }
    }

    /// Build target `mu` from `|0><0|`.
    fn build_from_pure(&mut self, mu: &[f64]) -> Result<()> {
        let n = self.half();
        let target_ratio = |p: usize| {
            let total = mu[p] + mu[n + p];
            if total <= MASS_EPS {
                0.0
            } else {
                mu[n + p] / total
            }
        };
        // slot s hosts target pair order[s]; ratios ascend with s
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| target_ratio(a).total_cmp(&target_ratio(b)));
        let mass: Vec<f64> = order.iter().map(|&p| mu[p] + mu[n + p]).collect();
        let ratio: Vec<f64> = order.iter().map(|&p| target_ratio(p)).collect();

        // split phase: peel each slot's mass off a reservoir parked at the
        // next lower index; only the reservoir is damped
        let mut remaining = 1.0;
        #[allow(clippy::needless_range_loop)]
        for s in 0..n.saturating_sub(1) {
            if remaining <= MASS_EPS {
                break;
            }
            if mass[s] >= remaining - MASS_EPS {
                break;
            }
            if mass[s] <= MASS_EPS {
                self.swap(s, s + 1);
            } else {
                let retention = 1.0 - mass[s] / remaining;
                self.swap(s, n + s);
                self.damp(retention.clamp(0.0, 1.0));
                self.swap(n + s, s + 1);
                remaining -= mass[s];
            }
            self.record(&[])?;
        }

        // activation phase: lift slot s into its upper index and damp every
        // active slot, so slot s ends with ratio prod_{t >= s} retention_t
        let active: Vec<usize> = (0..n)
            .filter(|&s| mass[s] > MASS_EPS && ratio[s] > MASS_EPS)
            .collect();
        let mut matched: Vec<usize> = Vec::new();
        for s in 0..n {
            if mass[s] > MASS_EPS && ratio[s] <= MASS_EPS {
                matched.push(s);
            }
        }
        for (idx, &s) in active.iter().enumerate() {
            let next = active.get(idx + 1).map_or(1.0, |&t| ratio[t]);
            let retention = ratio[s] / next;
            if !(0.0..=1.0 + 1e-12).contains(&retention) {
                return Err(Error::RootSolve {
                    pair: order[s],
                    reason: format!("retention {retention} outside [0, 1]"),
                });
            }
            self.swap(s, n + s);
            matched.push(s);
            if retention < 1.0 - MASS_EPS {
                self.damp(retention);
            }
            self.record(&matched)?;
        }

        // final permutation of whole pairs into target positions
        let mut content = order;
        for s in 0..n {
            while content[s] != s {
                let t = content[s];
                for (a, b) in [(s, t), (n + s, n + t)] {
                    if self.diag[a] != 0.0 || self.diag[b] != 0.0 {
                        self.swap(a, b);
                    }
                }
                content.swap(s, t);
            }
        }
        Ok(())
    }
}

/// Plan taking any diagonal state on `k` qubits to `|0...0><0...0|`.
pub fn prepare_pure_plan(k: usize) -> Result<TransportPlan> {
    check_k(k)?;
    let mut b = Builder::new(k, basis_diag(k));
    b.merge_to_pure();
    Ok(b.finish())
}

fn basis_diag(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; 1 << k];
    v[0] = 1.0;
    v
}

/// Plan taking `|0...0>` to `diag(mu)`.
pub fn pure_to_diagonal_plan(mu: &[f64], k: usize) -> Result<TransportPlan> {
    check_k(k)?;
    if mu.len() != 1 << k {
        return Err(Error::DimensionMismatch(format!(
            "target has length {}, expected {}",
            mu.len(),
            1usize << k
        )));
    }
    check_distribution(mu, "mu")?;
    let mut b = Builder::new(k, basis_diag(k));
    b.build_from_pure(mu)?;
    Ok(b.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCase {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub plan: TransportPlan,
}

/// Two-qubit case: the closed-form parameters of the four-step chain
/// together with an executable plan from `|00>` to `diag(mu)`.
pub fn base_case_4(mu: &[f64]) -> Result<BaseCase> {
    if mu.len() != 4 {
        return Err(Error::DimensionMismatch(format!(
            "base case needs 4 entries, got {}",
            mu.len()
        )));
    }
    check_distribution(mu, "mu")?;
    let alpha = mu[0] + mu[2];
    let beta = if (alpha - 1.0).abs() <= MASS_EPS {
        0.0
    } else {
        (mu[1] + mu[3]) / (alpha - 1.0) + 1.0
    };
    let gamma = if alpha <= MASS_EPS { 1.0 } else { mu[0] / alpha };
    Ok(BaseCase {
        alpha,
        beta,
        gamma,
        plan: pure_to_diagonal_plan(mu, 2)?,
    })
}

/// Plan from `diag(lambda)` to `diag(mu)` through the pure state.
pub fn plan_diagonal_transport(lambda: &[f64], mu: &[f64], k: usize) -> Result<TransportPlan> {
    check_k(k)?;
    let d = 1usize << k;
    if lambda.len() != d || mu.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "distributions must have length {d}"
        )));
    }
    check_distribution(lambda, "lambda")?;
    check_distribution(mu, "mu")?;
    let mut b = Builder::new(k, lambda.to_vec());
    b.merge_to_pure();
    b.build_from_pure(mu)?;
    Ok(b.finish())
}

fn descending_eig(rho: &DensityMatrix) -> (Vec<f64>, CMatrix) {
    let (vals, vecs) = eigh(rho.matrix());
    let d = vals.len();
    let mut u = CMatrix::zeros(d, d);
    let mut spec = Vec::with_capacity(d);
    for (col, src) in (0..d).rev().enumerate() {
        u.set_column(col, &vecs.column(src));
        spec.push(vals[src].max(0.0));
    }
    let total: f64 = spec.iter().sum();
    spec.iter_mut().for_each(|x| *x /= total);
    (spec, u)
}

/// Plan from `rho` to `sigma`: diagonalize, transport spectra, rotate.
///
/// With `hormander_unitaries` the standard two-local generating set is
/// first certified to generate the full unitary algebra, so the unitary
/// steps are implementable with that control set.
pub fn full_state_transport(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    hormander_unitaries: bool,
) -> Result<TransportPlan> {
    let d = rho.dim();
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch("rho and sigma differ in dimension".into()));
    }
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {d} is not a power of 2"
        )));
    }
    let k = d.trailing_zeros() as usize;
    if hormander_unitaries {
        let report = lie_closure(&standard_two_local_set(k), 4 * k + 4)?;
        if !report.is_hormander {
            return Err(Error::InvalidParameter(format!(
                "control set spans only {} of {} dimensions",
                report.dim_found,
                d * d - 1
            )));
        }
    }
    let (lambda, v) = descending_eig(rho);
    let (mu, w) = descending_eig(sigma);
    let core = plan_diagonal_transport(&lambda, &mu, k)?;
    let mut steps = Vec::with_capacity(core.steps.len() + 2);
    steps.push(PlanStep::ApplyUnitary {
        unitary: v.adjoint(),
    });
    let offset = 1;
    steps.extend(core.steps);
    steps.push(PlanStep::ApplyUnitary { unitary: w });
    let ledger = RatioLedger {
        entries: core
            .ledger
            .entries
            .into_iter()
            .map(|e| LedgerEntry {
                step: e.step + offset,
                ratios: e.ratios,
            })
            .collect(),
    };
    Ok(TransportPlan {
        k,
        dim: d,
        counts: count_report(&steps),
        steps,
        ledger,
    })
}

/// Kraus pair of the infinite-time damp of one register.
fn full_damp(register: usize, k: usize, rho: &CMatrix) -> CMatrix {
    let k0 = embed_qubit_op(&ket_bra(0, 0, 2), register, k);
    let k1 = embed_qubit_op(&ket_bra(0, 1, 2), register, k);
    &k0 * rho * k0.adjoint() + &k1 * rho * k1.adjoint()
}

fn apply_step(step: &PlanStep, k: usize, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let d = 1usize << k;
    let out = match step {
        PlanStep::ApplyUnitary { unitary } => unitary * rho.matrix() * unitary.adjoint(),
        PlanStep::AmplitudeDamp { register, retention } => {
            if *retention == 1.0 {
                return Ok(rho.clone());
            }
            if *retention == 0.0 {
                full_damp(*register, k, rho.matrix())
            } else {
                let a = embed_qubit_op(&ket_bra(0, 1, 2), *register, k);
                let t = -retention.ln() / 2.0;
                return lindblad::propagate(&Lindbladian::single_jump(a), rho, t);
            }
        }
        PlanStep::Transposition { i, j, .. } => {
            let mut m = rho.matrix().clone();
            m.swap_rows(*i, *j);
            m.swap_columns(*i, *j);
            m
        }
        PlanStep::DephaseDiagonal { registers } => {
            let mask = registers
                .iter()
                .fold(0usize, |acc, &r| acc | (1 << (k - 1 - r)));
            let mut m = rho.matrix().clone();
            for r in 0..d {
                for c in 0..d {
                    if (r ^ c) & mask != 0 {
                        m[(r, c)] = linalg::ZERO;
                    }
                }
            }
            m
        }
    };
    DensityMatrix::with_tol(linalg::hermitian_part(&out), 1e-9)
}

/// Every intermediate state, starting with `rho` itself.
pub fn execute_plan_trajectory(plan: &TransportPlan, rho: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    plan.validate()?;
    if rho.dim() != plan.dim {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, plan acts on {}",
            rho.dim(),
            plan.dim
        )));
    }
    let mut out = Vec::with_capacity(plan.steps.len() + 1);
    out.push(rho.clone());
    for step in &plan.steps {
        let next = apply_step(step, plan.k, out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

pub fn execute_plan(plan: &TransportPlan, rho: &DensityMatrix) -> Result<DensityMatrix> {
    Ok(execute_plan_trajectory(plan, rho)?
        .pop()
        .expect("trajectory holds the input"))
}
