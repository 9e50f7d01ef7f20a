//! Reachability: alignment functionals, greedy descent toward a target,
//! sampled porcupine obstructions and finite-time replacer constructions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::random::{random_traceless_hermitian, stream_rng};
use crate::linalg::{
    self, c, eigh, schatten_norm, spectral_apply, trace_distance, CMatrix, DensityMatrix,
    Superoperator,
};
use crate::lindblad::{self, replacer_generator, Lindbladian};
use crate::tangent::{PathSample, TangentVector};

/// Relative threshold below which the best alignment counts as a stall.
pub const STALL_TOL: f64 = 1e-9;
/// Alignments at or above `-OBSTRUCTION_TOL` count as nonnegative.
pub const OBSTRUCTION_TOL: f64 = 1e-10;
/// Largest generator count for vertex enumeration of cone combinations.
pub const MAX_CONE_GENERATORS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSetK {
    pub generators: Vec<Lindbladian>,
    #[serde(default)]
    pub cone_combinations: bool,
    #[serde(default = "default_rate")]
    pub max_total_rate: f64,
}

fn default_rate() -> f64 {
    1.0
}

impl ResourceSetK {
    pub fn finite(generators: Vec<Lindbladian>) -> Self {
        Self {
            generators,
            cone_combinations: false,
            max_total_rate: 1.0,
        }
    }

    pub fn cone(generators: Vec<Lindbladian>, max_total_rate: f64) -> Self {
        Self {
            generators,
            cone_combinations: true,
            max_total_rate,
        }
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::InvalidParameter("generator set is empty".into()));
        }
        let d = self.generators[0].dim;
        for (k, g) in self.generators.iter().enumerate() {
            g.validate()?;
            if g.dim != d {
                return Err(Error::DimensionMismatch(format!(
                    "generator {k} acts on dimension {}, expected {d}",
                    g.dim
                )));
            }
        }
        if !(self.max_total_rate > 0.0) || !self.max_total_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "max_total_rate must be positive, got {}",
                self.max_total_rate
            )));
        }
        if self.cone_combinations && self.generators.len() > MAX_CONE_GENERATORS {
            return Err(Error::InvalidParameter(format!(
                "cone combinations support at most {MAX_CONE_GENERATORS} generators"
            )));
        }
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "norm order must satisfy 1 < p < inf, got {p}"
        )));
    }
    Ok(())
}

/// `(eta - sigma) |eta - sigma|^{p-2}`, the gradient weight of the
/// p-distance. Zero eigenvalues contribute zero.
pub fn alignment_weight(eta: &CMatrix, sigma: &CMatrix, p: f64) -> Result<CMatrix> {
    check_p(p)?;
    let delta = eta - sigma;
    if linalg::frobenius(&delta) <= 1e-14 {
        return Err(Error::InvalidParameter(
            "alignment is undefined at the target state".into(),
        ));
    }
    let (vals, vecs) = eigh(&delta);
    Ok(spectral_apply(&vals, &vecs, |x| {
        if x == 0.0 {
            c(0.0)
        } else {
            c(x.signum() * x.abs().powf(p - 1.0))
        }
    }))
}

/// `tr(L(eta) (eta - sigma) |eta - sigma|^{p-2})`: the rate of change of
/// `||eta - sigma||_p^p / p` under `L`. Negative values move toward `sigma`.
pub fn alignment(l: &Lindbladian, eta: &DensityMatrix, sigma: &DensityMatrix, p: f64) -> Result<f64> {
    let w = alignment_weight(eta.matrix(), sigma.matrix(), p)?;
    let le = lindblad::apply(l, eta)?;
    Ok(linalg::hs_inner(&le, &w).re)
}

/// One constant piece of a drive schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t_start: f64,
    pub t_end: f64,
    /// Chosen generator index (finite mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<usize>,
    /// Chosen cone weights (cone mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Alignment of the chosen generator when the piece started.
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StallCertificate {
    pub state: DensityMatrix,
    pub min_alignment: f64,
}

/// Per-step record of a drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveStep {
    pub t: f64,
    /// `||eta - sigma||_p`.
    pub distance: f64,
    pub trace_distance: f64,
    /// Index of the chosen generator, absent where no step was taken.
    pub generator: Option<usize>,
    pub alignment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    pub reached: bool,
    pub final_state: DensityMatrix,
    pub final_time: f64,
    pub trajectory: PathSample,
    pub steps: Vec<DriveStep>,
    pub generator_schedule: Vec<ScheduleEntry>,
    pub stall_certificate: Option<StallCertificate>,
    pub t_max_exceeded: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DriveParams {
    pub p: f64,
    pub dt: f64,
    pub t_max: f64,
    pub target_tol: f64,
}

fn renormalize(m: CMatrix) -> Result<DensityMatrix> {
    let h = linalg::hermitian_part(&m);
    let tr = h.trace().re;
    DensityMatrix::with_tol(h / c(tr), 1e-9)
}

/// Greedy closed-loop descent.
///
/// Each step picks the generator (or, in cone mode, the optimal vertex of
/// the budgeted weight simplex) with the most negative alignment at the
/// current state and propagates for `dt`. Stops when the p-distance drops
/// to `target_tol`, when no generator has alignment below
/// `-STALL_TOL * ||eta - sigma||_p^p`, or at `t_max`.
pub fn reach_drive(
    k: &ResourceSetK,
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    params: DriveParams,
) -> Result<ReachReport> {
    k.validate()?;
    check_p(params.p)?;
    let DriveParams {
        p,
        dt,
        t_max,
        target_tol,
    } = params;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_max must be finite and nonnegative, got {t_max}"
        )));
    }
    if !(target_tol > 0.0) {
        return Err(Error::InvalidParameter("target_tol must be positive".into()));
    }
    let d = k.dim();
    if rho0.dim() != d || sigma.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "states must have dimension {d}"
        )));
    }
    let scale = if k.cone_combinations {
        k.max_total_rate
    } else {
        1.0
    };
    let steppers: Vec<Superoperator> = k
        .generators
        .iter()
        .map(|g| lindblad::build(g).exp(dt * scale))
        .collect();

    let mut eta = rho0.clone();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![eta.clone()];
    let mut steps = Vec::new();
    let mut schedule: Vec<ScheduleEntry> = Vec::new();
    let mut stall = None;
    let mut reached = false;
    let mut exceeded = false;

    loop {
        let dist = schatten_norm(&(eta.matrix() - sigma.matrix()), p);
        let td = trace_distance(eta.matrix(), sigma.matrix());
        if dist <= target_tol {
            reached = true;
            steps.push(DriveStep {
                t,
                distance: dist,
                trace_distance: td,
                generator: None,
                alignment: None,
            });
            break;
        }
        if t >= t_max - 1e-12 * t_max.max(1.0) {
            exceeded = true;
            steps.push(DriveStep {
                t,
                distance: dist,
                trace_distance: td,
                generator: None,
                alignment: None,
            });
            break;
        }
        let aligns: Vec<f64> = k
            .generators
            .iter()
            .map(|g| alignment(g, &eta, sigma, p))
            .collect::<Result<_>>()?;
        let (best, amin) = aligns
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
        let chosen_align = amin * scale;
        if chosen_align >= -STALL_TOL * dist.powf(p) {
            stall = Some(StallCertificate {
                state: eta.clone(),
                min_alignment: chosen_align,
            });
            steps.push(DriveStep {
                t,
                distance: dist,
                trace_distance: td,
                generator: None,
                alignment: Some(chosen_align),
            });
            break;
        }
        steps.push(DriveStep {
            t,
            distance: dist,
            trace_distance: td,
            generator: Some(best),
            alignment: Some(chosen_align),
        });
        let step = dt.min(t_max - t);
        let next = if step < dt {
            lindblad::build(&k.generators[best])
                .exp(step * scale)
                .apply(eta.matrix())?
        } else {
            steppers[best].apply(eta.matrix())?
        };
        eta = renormalize(next)?;
        let t_next = t + step;

        let weights = k.cone_combinations.then(|| {
            let mut w = vec![0.0; k.generators.len()];
            w[best] = k.max_total_rate;
            w
        });
        match schedule.last_mut() {
            Some(last) if last.generator == Some(best) => last.t_end = t_next,
            _ => schedule.push(ScheduleEntry {
                t_start: t,
                t_end: t_next,
                generator: Some(best),
                weights,
                alignment: chosen_align,
            }),
        }
        t = t_next;
        times.push(t);
        states.push(eta.clone());
    }

    let trajectory = PathSample {
        times,
        states,
        derivs: None::<Vec<TangentVector>>,
    };
    Ok(ReachReport {
        reached,
        final_state: eta,
        final_time: t,
        trajectory,
        steps,
        generator_schedule: schedule,
        stall_certificate: stall,
        t_max_exceeded: exceeded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorcupineReport {
    pub sigma: DensityMatrix,
    pub epsilon: f64,
    pub p: f64,
    pub samples: usize,
    pub min_alignment_over_samples: f64,
    pub obstruction_evidence: bool,
    /// False for a vacuous run (no samples).
    pub valid: bool,
    /// The whole sphere lies inside the state space.
    pub ball_inside: bool,
    pub diagonal_only: bool,
    /// Sample achieving the minimum alignment.
    pub worst_state: Option<DensityMatrix>,
    /// Rejected candidate directions (boundary case only).
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PorcupineParams {
    pub epsilon: f64,
    pub p: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Restrict to diagonal directions (the commutative slice).
    pub diagonal_only: bool,
}

const MAX_ATTEMPTS: usize = 10_000;

fn random_direction(d: usize, diagonal: bool, rng: &mut crate::linalg::random::SeededRng) -> CMatrix {
    if diagonal {
        use rand_distr::{Distribution, StandardNormal};
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let mean = v.iter().sum::<f64>() / d as f64;
        linalg::diag(&v.iter().map(|x| x - mean).collect::<Vec<_>>())
    } else {
        random_traceless_hermitian(d, rng)
    }
}

/// Minimum alignment over the resource set at `eta`.
fn min_alignment(k: &ResourceSetK, eta: &DensityMatrix, sigma: &DensityMatrix, p: f64) -> Result<f64> {
    let mut m = f64::INFINITY;
    for g in &k.generators {
        m = m.min(alignment(g, eta, sigma, p)?);
    }
    if k.cone_combinations {
        // linear objective over the budgeted simplex: best vertex or zero
        Ok((m * k.max_total_rate).min(0.0))
    } else {
        Ok(m)
    }
}

/// Sampled porcupine test on the sphere `||eta - sigma||_p = epsilon`
/// intersected with the state space.
///
/// If `lambda_min(sigma) > epsilon` the whole sphere is inside the state
/// space (operator norm is bounded by every Schatten norm) and directions
/// are sampled freely. Otherwise directions are pushed toward the state
/// space (the block orthogonal to the support of `sigma` is replaced by its
/// absolute value) and rejected until `sigma + delta` is a density.
pub fn porcupine_check(
    k: &ResourceSetK,
    sigma: &DensityMatrix,
    params: PorcupineParams,
) -> Result<PorcupineReport> {
    k.validate()?;
    let PorcupineParams {
        epsilon,
        p,
        n_samples,
        seed,
        diagonal_only,
    } = params;
    check_p(p)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let d = k.dim();
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "sigma has dimension {}, generators act on {d}",
            sigma.dim()
        )));
    }
    let ball_inside = sigma.min_eig() > epsilon;
    if n_samples == 0 {
        return Ok(PorcupineReport {
            sigma: sigma.clone(),
            epsilon,
            p,
            samples: 0,
            min_alignment_over_samples: f64::INFINITY,
            obstruction_evidence: false,
            valid: false,
            ball_inside,
            diagonal_only,
            worst_state: None,
            rejected: 0,
        });
    }
    let sd = crate::tangent::support_projection(sigma, linalg::DEFAULT_EIG_TOL);
    let r = sd.rank;

    let sample = |i: usize| -> Result<(f64, DensityMatrix, usize)> {
        let mut rng = stream_rng(seed, i as u64);
        for attempt in 0..MAX_ATTEMPTS {
            let mut delta = random_direction(d, diagonal_only, &mut rng);
            if !ball_inside && r < d {
                let v = &sd.basis;
                let mut da = v.adjoint() * &delta * v;
                let perp = da.view((r, r), (d - r, d - r)).into_owned();
                let (vals, vecs) = eigh(&perp);
                let abs = spectral_apply(&vals, &vecs, |x| c(x.abs()));
                da.view_mut((r, r), (d - r, d - r)).copy_from(&abs);
                let shift = da.trace() / c(r as f64);
                for j in 0..r {
                    da[(j, j)] -= shift;
                }
                delta = linalg::hermitian_part(&(v * da * v.adjoint()));
            }
            let n = schatten_norm(&delta, p);
            if n < 1e-12 {
                continue;
            }
            let eta = sigma.matrix() + delta * c(epsilon / n);
            if linalg::min_eig(&eta) < -1e-12 {
                continue;
            }
            let eta = DensityMatrix::with_tol(eta, 1e-9)?;
            let m = min_alignment(k, &eta, sigma, p)?;
            return Ok((m, eta, attempt));
        }
        Err(Error::BallOutsideStateSpace(epsilon))
    };

    let results: Vec<Result<(f64, DensityMatrix, usize)>> =
        (0..n_samples).into_par_iter().map(sample).collect();
    let mut best: Option<(f64, DensityMatrix)> = None;
    let mut rejected = 0;
    for res in results {
        let (m, eta, rej) = res?;
        rejected += rej;
        if best.as_ref().is_none_or(|(bm, _)| m < *bm) {
            best = Some((m, eta));
        }
    }
    let (min_val, worst) = best.expect("at least one sample");
    Ok(PorcupineReport {
        sigma: sigma.clone(),
        epsilon,
        p,
        samples: n_samples,
        min_alignment_over_samples: min_val,
        obstruction_evidence: min_val >= -OBSTRUCTION_TOL,
        valid: true,
        ball_inside,
        diagonal_only,
        worst_state: Some(worst),
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootReport {
    /// Time at which the trajectory meets the target.
    pub hit_time: f64,
    /// Overshoot target `sigma + eps (sigma - rho)` of the replacer.
    pub overshoot_target: DensityMatrix,
    pub trajectory: PathSample,
    /// Trace distance between the state at `hit_time` and the target.
    pub hit_error: f64,
}

/// Replacer path aimed past `sigma` so that it reaches `sigma` in finite
/// time `ln(1 + 1/eps)`.
pub fn replacer_overshoot(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    eps: f64,
    n_samples: usize,
) -> Result<OvershootReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch("rho and sigma differ in dimension".into()));
    }
    let smin = sigma.min_eig();
    if smin <= linalg::DEFAULT_EIG_TOL {
        return Err(Error::InvalidParameter(format!(
            "sigma must be invertible, smallest eigenvalue is {smin:e}"
        )));
    }
    let target = sigma.matrix() + (sigma.matrix() - rho.matrix()) * c(eps);
    let tmin = linalg::min_eig(&target);
    if tmin < -1e-12 {
        return Err(Error::NotPsd { min_eig: tmin });
    }
    let target = DensityMatrix::with_tol(target, 1e-9)?;
    let generator = replacer_generator(&target);
    let s = (1.0 + 1.0 / eps).ln();
    let n = n_samples.max(2);
    let times: Vec<f64> = (0..n).map(|i| s * i as f64 / (n - 1) as f64).collect();
    let states = times
        .iter()
        .map(|&t| lindblad::propagate(&generator, rho, t))
        .collect::<Result<Vec<_>>>()?;
    let hit_error = trace_distance(states[n - 1].matrix(), sigma.matrix());
    Ok(OvershootReport {
        hit_time: s,
        overshoot_target: target,
        trajectory: PathSample {
            times,
            states,
            derivs: None,
        },
        hit_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanSchedule {
    pub trajectory: PathSample,
    /// Trace norm of `L_t(rho_t) = sec^2(t) e^{-tan t} (sigma - rho)` per
    /// sample; zero in the limit `t -> pi/2`.
    pub velocity_norms: Vec<f64>,
}

/// Replacer flow reparametrized by `tan`, reaching `sigma` at `t = pi/2`.
pub fn tan_schedule(rho: &DensityMatrix, sigma: &DensityMatrix, n_steps: usize) -> Result<TanSchedule> {
    if n_steps < 2 {
        return Err(Error::InvalidParameter("n_steps must be at least 2".into()));
    }
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch("rho and sigma differ in dimension".into()));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let gap = linalg::trace_norm(&(sigma.matrix() - rho.matrix()));
    let mut times = Vec::with_capacity(n_steps);
    let mut states = Vec::with_capacity(n_steps);
    let mut norms = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let t = half_pi * i as f64 / (n_steps - 1) as f64;
        times.push(t);
        if i == n_steps - 1 {
            states.push(sigma.clone());
            norms.push(0.0);
            continue;
        }
        let w = (-t.tan()).exp();
        let m = rho.matrix() * c(w) + sigma.matrix() * c(1.0 - w);
        states.push(DensityMatrix::with_tol(m, 1e-9)?);
        let sec2 = 1.0 / (t.cos() * t.cos());
        norms.push(sec2 * w * gap);
    }
    Ok(TanSchedule {
        trajectory: PathSample {
            times,
            states,
            derivs: None,
        },
        velocity_norms: norms,
    })
}

/// Alignment of `D_{|r><s|}` at diagonal `rho` toward diagonal `sigma`
/// (p = 2): `2 rho_ss (rho_rr - rho_ss - sigma_rr + sigma_ss)`.
pub fn sparse_alignment_diagonal(rho: &[f64], sigma: &[f64], r: usize, s: usize) -> Result<f64> {
    if rho.len() != sigma.len() {
        return Err(Error::DimensionMismatch("rho and sigma differ in length".into()));
    }
    if r >= rho.len() || s >= rho.len() {
        return Err(Error::InvalidParameter(format!(
            "indices ({r}, {s}) out of range for dimension {}",
            rho.len()
        )));
    }
    if r == s {
        return Err(Error::InvalidParameter("r and s must differ".into()));
    }
    Ok(2.0 * rho[s] * (rho[r] - rho[s] - sigma[r] + sigma[s]))
}

/// The pair `(r, s)` with the most negative sparse alignment.
pub fn most_negative_sparse_pair(rho: &[f64], sigma: &[f64]) -> Result<(usize, usize, f64)> {
    let d = rho.len();
    if d < 2 {
        return Err(Error::InvalidParameter("dimension must be at least 2".into()));
    }
    let mut best = (0, 1, f64::INFINITY);
    for r in 0..d {
        for s in 0..d {
            if r != s {
                let v = sparse_alignment_diagonal(rho, sigma, r, s)?;
                if v < best.2 {
                    best = (r, s, v);
                }
            }
        }
    }
    Ok(best)
}
