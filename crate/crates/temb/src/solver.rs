//! Constrained placement of a query point.
//!
//! Given a query `u` with nearest train point `x_nn` at distance `r`, the
//! solver picks a correction `z ∈ ℝ^m` inside the ball `|z| <= r` and a
//! family of slabs `|<a_i, z> - b_i| <= s_i`, one per other train point.
//! Two objectives are supported: the default quadratic `|z|^2 + 2 <d, z>`
//! (encourages movement away from the purely linear image) and the linear
//! `<d, z>` (picks the feasible point closest to the linear image).
//!
//! The program is solved by ADMM on the splitting `y = Az` (box) and
//! `v = z` (ball), normalized to unit slab rows and unit ball radius. The
//! z-update is an exact linear solve through a Cholesky factorization of
//! whichever normal matrix is smaller (`cI + ρAᵀA` when `m <= k`, else
//! the Gram `(c/ρ)I + AAᵀ` via the Woodbury identity), so heavily
//! correlated slab normals cost nothing extra; alternating-projection
//! schemes crawl exactly there. Over-relaxation and residual-balancing
//! updates of `ρ` are applied as standard.
//!
//! The returned iterate is finished with an exact ball projection, so the
//! correction never leaves the ball and the lift's radicand stays
//! nonnegative; feasibility is judged on that finished iterate.
//!
//! If the slacks are too tight for the intersection to be nonempty the
//! solver widens them by `escalation_factor` (rebuilt from epsilon) up to
//! `max_escalations` times, then reports infeasibility carrying its best
//! iterate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ball radius, slab geometry, and the slack scale they were built at.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    /// Distance from the query to its nearest train point.
    pub radius: f64,
    /// Slab normals, one row per retained train point (`(n-1) x m`).
    pub rows: Array2<f64>,
    /// Slab centers `b_i`.
    pub targets: Vec<f64>,
    /// Slab half-widths `s_i` at the base epsilon.
    pub slacks: Vec<f64>,
    /// Slack scale the system was built with.
    pub epsilon: f64,
    /// Index of the nearest train point (its row is not in `rows`).
    pub nn_index: usize,
}

/// Which function the solver minimizes over the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// `|z|^2 + 2 <drift, z>`, `drift = П(u - x_nn)`.
    Nonlinear,
    /// `<drift, z>`, `drift = П(x_nn - u)`.
    InnerProd,
}

/// Objective kind plus its drift vector.
#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub drift: Array1<f64>,
}

impl Objective {
    pub fn nonlinear(drift: Array1<f64>) -> Self {
        Objective { kind: ObjectiveKind::Nonlinear, drift }
    }

    pub fn inner_prod(drift: Array1<f64>) -> Self {
        Objective { kind: ObjectiveKind::InnerProd, drift }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let dz: f64 = self.drift.iter().zip(z).map(|(d, v)| d * v).sum();
        match self.kind {
            ObjectiveKind::Nonlinear => z.iter().map(|v| v * v).sum::<f64>() + 2.0 * dz,
            ObjectiveKind::InnerProd => dz,
        }
    }

    /// Starting iterate `П(u - x_nn)` expressed through the stored drift.
    fn initial_point(&self) -> Array1<f64> {
        match self.kind {
            ObjectiveKind::Nonlinear => self.drift.clone(),
            ObjectiveKind::InnerProd => self.drift.mapv(|v| -v),
        }
    }
}

/// Solver tolerances and budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Absolute feasibility target, scaled by `max(radius, 1)`.
    pub feas_tol: f64,
    /// Relative optimality target (dual-residual stopping scale).
    pub rel_tol: f64,
    /// ADMM iteration budget per escalation attempt.
    pub max_iters: usize,
    /// Initial penalty parameter; adapted by residual balancing.
    pub rho: f64,
    /// Slack widenings allowed before reporting infeasibility.
    pub max_escalations: u32,
    /// Multiplier applied to epsilon (hence slacks) per escalation.
    pub escalation_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-7,
            rel_tol: 1e-6,
            max_iters: 600,
            rho: 1.0,
            max_escalations: 3,
            escalation_factor: 1.5,
        }
    }
}

/// Outcome of a solve, serializable for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverResult {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Outer iterations consumed (across escalation attempts).
    pub iterations: usize,
    /// Max constraint violation of `z` against the effective slacks.
    pub feas_residual: f64,
    pub escalations: u32,
    /// Epsilon after any widenings; equals the input when none happened.
    pub effective_epsilon: f64,
    pub converged: bool,
}

/// Index of the row of `points` closest to `q`; ties break to the lowest
/// index (strict comparison while scanning upward).
pub fn nearest_index(points: &ArrayView2<f64>, q: ArrayView1<f64>) -> Result<usize> {
    if points.nrows() == 0 {
        return Err(Error::InvalidInput("nearest_index over empty set".into()));
    }
    if points.ncols() != q.len() {
        return Err(Error::DimensionMismatch { expected: points.ncols(), got: q.len() });
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, row) in points.rows().into_iter().enumerate() {
        let mut d = 0.0;
        for (a, b) in row.iter().zip(q.iter()) {
            let t = a - b;
            d += t * t;
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(best)
}

/// Builds the constraint system for query `u` against a train set and its
/// images. Slab rows come from image differences (`Пx_i - Пx_nn`), the
/// slab for the nearest point itself is dropped, and each half-width is
/// `epsilon * r * |x_i - x_nn|`, so it is zero exactly for duplicates of
/// the nearest point or when `r = 0`.
pub fn build_constraints(
    u: ArrayView1<f64>,
    train: &Array2<f64>,
    mapped_train: &Array2<f64>,
    epsilon: f64,
) -> Result<ConstraintSystem> {
    let n = train.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("constraint build needs train points".into()));
    }
    if mapped_train.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mapped_train.nrows() });
    }
    if train.ncols() != u.len() {
        return Err(Error::DimensionMismatch { expected: train.ncols(), got: u.len() });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let m = mapped_train.ncols();
    let nn = nearest_index(&train.view(), u)?;
    let diff_nn = &u - &train.row(nn);
    let radius = diff_nn.dot(&diff_nn).sqrt();

    let mut rows = Array2::zeros((n - 1, m));
    let mut targets = Vec::with_capacity(n - 1);
    let mut slacks = Vec::with_capacity(n - 1);
    let mut out_row = 0;
    for i in 0..n {
        if i == nn {
            continue;
        }
        let a = &mapped_train.row(i) - &mapped_train.row(nn);
        rows.row_mut(out_row).assign(&a);
        let dx = &train.row(i) - &train.row(nn);
        targets.push(diff_nn.dot(&dx));
        slacks.push(epsilon * radius * dx.dot(&dx).sqrt());
        out_row += 1;
    }
    Ok(ConstraintSystem { radius, rows, targets, slacks, epsilon, nn_index: nn })
}

/// Euclidean projection onto the centered ball of radius `r`.
pub fn project_ball(z: &Array1<f64>, r: f64) -> Array1<f64> {
    let n = z.dot(z).sqrt();
    if n <= r {
        z.clone()
    } else {
        z.mapv(|v| v * (r / n))
    }
}

/// Euclidean projection onto the slab `|<a, z> - b| <= s`. A zero normal
/// makes the slab all of space when `|b| <= s` and empty otherwise.
pub fn project_slab(z: &Array1<f64>, a: ArrayView1<f64>, b: f64, s: f64) -> Result<Array1<f64>> {
    let a_sq = a.dot(&a);
    if a_sq == 0.0 {
        return if b.abs() <= s {
            Ok(z.clone())
        } else {
            Err(Error::StructurallyInfeasible { index: 0, b_abs: b.abs(), slack: s })
        };
    }
    let v = a.dot(z);
    let target = if v > b + s {
        b + s
    } else if v < b - s {
        b - s
    } else {
        return Ok(z.clone());
    };
    let c = (v - target) / a_sq;
    Ok(z - &a.mapv(|w| w * c))
}

/// Exact final ball projection so the returned iterate never leaves the
/// ball; keeps the lift's radicand nonnegative up to roundoff.
fn clamp_to_ball(z: &mut [f64], radius: f64) {
    let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > radius {
        let f = radius / n;
        for v in z.iter_mut() {
            *v *= f;
        }
    }
}

/// Worst violation `max_i (|<a_i, z> - b_i| - s_i)+` over every row. A
/// zero-normal row evaluates to `(|b_i| - s_i)+`, which no `z` changes.
fn worst_slab_violation(z: &[f64], rows: &Array2<f64>, targets: &[f64], slacks: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..rows.nrows() {
        let a = rows.row(i);
        let v: f64 = a.iter().zip(z).map(|(x, y)| x * y).sum();
        worst = worst.max((v - targets[i]).abs() - slacks[i]);
    }
    worst
}

/// In-place lower-triangular Cholesky factorization; the input must be
/// symmetric positive definite, which the shifted normal matrices are by
/// construction.
fn cholesky_in_place(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if d <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "normal matrix lost positive definiteness at pivot {j}"
            )));
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / d;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` in place given the lower factor.
fn cholesky_solve(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * b[k];
        }
        b[i] = v / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * b[k];
        }
        b[i] = v / l[[i, i]];
    }
}

/// Slabs rescaled to unit normals and a unit ball: row `i` constrains
/// `<rows[i], ζ>` to `centers[i] ± half0[i] * widen` where `ζ = z / r`.
struct ScaledSlabs {
    rows: Array2<f64>,
    /// Original row norms, for mapping violations back to input units.
    norms: Vec<f64>,
    centers: Vec<f64>,
    half0: Vec<f64>,
}

impl ScaledSlabs {
    fn build(cs: &ConstraintSystem, keep: &[usize]) -> Self {
        let m = cs.rows.ncols();
        let r = cs.radius;
        let mut rows = Array2::zeros((keep.len(), m));
        let mut norms = Vec::with_capacity(keep.len());
        let mut centers = Vec::with_capacity(keep.len());
        let mut half0 = Vec::with_capacity(keep.len());
        for (slot, &i) in keep.iter().enumerate() {
            let a = cs.rows.row(i);
            let norm = a.dot(&a).sqrt();
            let inv = 1.0 / norm;
            for (dst, &v) in rows.row_mut(slot).iter_mut().zip(a.iter()) {
                *dst = v * inv;
            }
            norms.push(norm);
            centers.push(cs.targets[i] * inv / r);
            half0.push(cs.slacks[i] * inv / r);
        }
        ScaledSlabs { rows, norms, centers, half0 }
    }

    fn k(&self) -> usize {
        self.rows.nrows()
    }
}

/// Cholesky factor of the z-update system `(cI + ρAᵀA) ζ = rhs`, stored
/// on whichever side is smaller.
enum Factor {
    /// `m <= k`: factor of `cI + ρAᵀA` itself.
    Primal(Array2<f64>),
    /// `k < m`: factor of `(c/ρ)I + AAᵀ`; apply via Woodbury.
    Dual(Array2<f64>),
}

/// Base normal matrix without the diagonal shift, cached across `ρ`
/// updates and escalation attempts.
enum NormalCache {
    Primal(Array2<f64>),
    Dual(Array2<f64>),
}

impl NormalCache {
    fn build(slabs: &ScaledSlabs, m: usize) -> Self {
        let k = slabs.k();
        if m <= k {
            let mut ata = Array2::zeros((m, m));
            for i in 0..k {
                let a = slabs.rows.row(i);
                for p in 0..m {
                    let ap = a[p];
                    if ap == 0.0 {
                        continue;
                    }
                    for q in 0..=p {
                        ata[[p, q]] += ap * a[q];
                    }
                }
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    ata[[p, q]] = ata[[q, p]];
                }
            }
            NormalCache::Primal(ata)
        } else {
            let mut gram = Array2::zeros((k, k));
            for i in 0..k {
                let ai = slabs.rows.row(i);
                for j in 0..=i {
                    let v = ai.dot(&slabs.rows.row(j));
                    gram[[i, j]] = v;
                    gram[[j, i]] = v;
                }
            }
            NormalCache::Dual(gram)
        }
    }

    fn factor(&self, c: f64, rho: f64) -> Result<Factor> {
        match self {
            NormalCache::Primal(ata) => {
                let mut k_mat = ata.mapv(|v| v * rho);
                for p in 0..k_mat.nrows() {
                    k_mat[[p, p]] += c;
                }
                cholesky_in_place(&mut k_mat)?;
                Ok(Factor::Primal(k_mat))
            }
            NormalCache::Dual(gram) => {
                let mut k_mat = gram.clone();
                let shift = c / rho;
                for p in 0..k_mat.nrows() {
                    k_mat[[p, p]] += shift;
                }
                cholesky_in_place(&mut k_mat)?;
                Ok(Factor::Dual(k_mat))
            }
        }
    }
}

/// Rounds a stalled near-feasible iterate exactly into the slabs by
/// blending it toward a strictly feasible anchor.
///
/// Every slab value is linear in the blend weight, so the smallest
/// weight clearing all violated rows is computed in closed form, and an
/// anchor-side excursion caps it from above. Nearly parallel active rows
/// leave first-order iterates hovering just outside the box; the blend
/// removes that tail with an objective shift proportional to the
/// residual. Inputs are scaled (unit ball); the result (z in input
/// units, worst violation in input units) is verified with a fresh
/// matrix product before being offered to the caller.
fn slater_round(
    slabs: &ScaledSlabs,
    widen: f64,
    vac_viol: f64,
    anchor: &[f64],
    az_anchor: &[f64],
    zeta: &[f64],
    azeta: &[f64],
    radius: f64,
) -> Option<(Vec<f64>, f64)> {
    // Blends larger than this would move the objective noticeably; a
    // stalled iterate that far out is not a rounding candidate.
    const THETA_CAP: f64 = 0.05;
    let k = slabs.k();
    let nz = zeta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let kappa = if nz > 1.0 { 1.0 / nz } else { 1.0 };

    let mut theta_lo = 0.0f64;
    let mut theta_hi = 1.0f64;
    for i in 0..k {
        let lo = slabs.centers[i] - slabs.half0[i] * widen;
        let hi = slabs.centers[i] + slabs.half0[i] * widen;
        let d = kappa * azeta[i];
        let e = az_anchor[i];
        if e == d {
            if d < lo || d > hi {
                return None;
            }
            continue;
        }
        // The blended value d + θ(e - d) stays in [lo, hi] for θ in one
        // interval; intersect them all.
        let t1 = (lo - d) / (e - d);
        let t2 = (hi - d) / (e - d);
        theta_lo = theta_lo.max(t1.min(t2));
        theta_hi = theta_hi.min(t1.max(t2));
    }
    if theta_lo > theta_hi {
        return None;
    }
    let theta = (theta_lo * 1.01 + 1e-15).min(theta_hi);
    if theta > THETA_CAP {
        return None;
    }

    let mut z: Vec<f64> = zeta
        .iter()
        .zip(anchor)
        .map(|(&zi, &ai)| (1.0 - theta) * kappa * zi + theta * ai)
        .collect();
    clamp_to_ball(&mut z, 1.0);
    let mut worst = vac_viol;
    for (i, row) in slabs.rows.rows().into_iter().enumerate() {
        let row = row.to_slice().expect("slab rows are contiguous");
        let v: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
        let miss = (v - slabs.centers[i]).abs() - slabs.half0[i] * widen;
        worst = worst.max(miss * radius * slabs.norms[i]);
    }
    let out: Vec<f64> = z.iter().map(|&v| v * radius).collect();
    Some((out, worst.max(0.0)))
}

/// ADMM state carried across escalation attempts so each retry starts
/// from the previous iterate instead of from scratch.
struct AdmmState {
    zeta: Vec<f64>,
    y: Vec<f64>,
    v: Vec<f64>,
    lam: Vec<f64>,
    mu: Vec<f64>,
    rho: f64,
}

/// Over-relaxation weight; standard values in [1.5, 1.8] cut iteration
/// counts roughly in half without affecting the fixed point.
const RELAX: f64 = 1.6;
/// Feasibility, stall, and penalty checks run every this many iterations.
const CHECK_EVERY: usize = 5;

/// One escalation attempt: runs ADMM on the scaled problem until the
/// ball-clamped iterate meets `tol` in input units and the dual residual
/// settles, the residual stalls above target, or the budget runs out.
/// Returns (clamped z in input units, residual, iterations, converged).
#[allow(clippy::too_many_arguments)]
fn admm_attempt(
    slabs: &ScaledSlabs,
    widen: f64,
    vac_viol: f64,
    obj: &Objective,
    cache: &NormalCache,
    state: &mut AdmmState,
    anchor: &(Vec<f64>, Vec<f64>),
    opts: &SolverOptions,
    radius: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64, usize, bool)> {
    let m = obj.drift.len();
    let k = slabs.k();
    let drift = obj.drift.as_slice().expect("drift is contiguous");
    let dn = drift.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Primal iterates warm-start the attempt; duals do not. After an
    // infeasible attempt they hold large opposing values that a widened
    // problem would spend most of its budget unwinding.
    state.lam.iter_mut().for_each(|v| *v = 0.0);
    state.mu.iter_mut().for_each(|v| *v = 0.0);

    // Linear coefficient of the scaled objective and the diagonal weight
    // of the z-update system. The quadratic `|ζ + δ|^2` contributes 2I to
    // the Hessian; the linear objective is normalized to a unit gradient.
    let mut q0 = vec![0.0; m];
    let mut c = match obj.kind {
        ObjectiveKind::Nonlinear => {
            for (q, &d) in q0.iter_mut().zip(drift) {
                *q = -2.0 * d / radius;
            }
            2.0 + state.rho
        }
        ObjectiveKind::InnerProd => {
            if dn > 0.0 {
                for (q, &d) in q0.iter_mut().zip(drift) {
                    *q = -d / dn;
                }
            }
            state.rho
        }
    };
    let mut factor = cache.factor(c, state.rho)?;

    let lo: Vec<f64> = slabs
        .centers
        .iter()
        .zip(&slabs.half0)
        .map(|(&t, &h)| t - h * widen)
        .collect();
    let hi: Vec<f64> = slabs
        .centers
        .iter()
        .zip(&slabs.half0)
        .map(|(&t, &h)| t + h * widen)
        .collect();

    let mut rhs = vec![0.0; m];
    let mut azeta = vec![0.0; k];
    let mut tmp_k = vec![0.0; k];
    let mut tmp_m = vec![0.0; m];
    let mut y_prev = vec![0.0; k];
    let mut v_prev = vec![0.0; m];
    let mut dual_vec = vec![0.0; m];
    // Dual snapshots from the previous check, for the infeasibility
    // certificate below.
    let mut lam_chk = state.lam.clone();
    let mut mu_chk = state.mu.clone();
    let mut dw = vec![0.0; m];

    let mat_vec = |out: &mut [f64], x: &[f64]| {
        for (o, row) in out.iter_mut().zip(slabs.rows.rows()) {
            let row = row.to_slice().expect("slab rows are contiguous");
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    };
    let mat_t_vec_into = |out: &mut [f64], x: &[f64], scale: f64| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (xi, row) in x.iter().zip(slabs.rows.rows()) {
            let w = *xi * scale;
            if w == 0.0 {
                continue;
            }
            let row = row.to_slice().expect("slab rows are contiguous");
            for (o, a) in out.iter_mut().zip(row) {
                *o += w * a;
            }
        }
    };

    // Returned iterate: among feasible checks the most recent wins, since
    // ADMM keeps improving the objective after feasibility is reached;
    // while infeasible, the lowest-residual iterate is kept instead.
    let mut ret_z: Vec<f64> = Vec::new();
    let mut ret_resid = f64::INFINITY;
    let mut have_feasible = false;
    let mut best_infeas = f64::INFINITY;
    let mut best_rp = f64::INFINITY;
    let mut stall_checks = 0usize;
    let mut feas_streak = 0usize;
    let mut rd_best = f64::INFINITY;
    let mut rd_flat = 0usize;
    let mut rho_moves = 0u32;
    let report = |zeta: &[f64], azeta: &[f64]| {
        // The final iterate is the exact ball clamp κζ, so slab values
        // scale by the same κ and no extra matrix product is needed.
        let nz = zeta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let kappa = if nz > 1.0 { 1.0 / nz } else { 1.0 };
        let mut worst = vac_viol;
        for i in 0..k {
            let miss = (kappa * azeta[i] - slabs.centers[i]).abs() - slabs.half0[i] * widen;
            worst = worst.max(miss * radius * slabs.norms[i]);
        }
        (kappa, worst)
    };

    let mut iter = 0usize;
    while iter < opts.max_iters {
        iter += 1;
        // z-update: (cI + ρAᵀA) ζ = -∇F_lin + ρAᵀ(y - λ) + ρ(v - μ).
        for i in 0..k {
            tmp_k[i] = state.y[i] - state.lam[i];
        }
        mat_t_vec_into(&mut rhs, &tmp_k, state.rho);
        for p in 0..m {
            rhs[p] += q0[p] + state.rho * (state.v[p] - state.mu[p]);
        }
        match &factor {
            Factor::Primal(l) => {
                state.zeta.copy_from_slice(&rhs);
                cholesky_solve(l, &mut state.zeta);
            }
            Factor::Dual(l) => {
                mat_vec(&mut tmp_k, &rhs);
                cholesky_solve(l, &mut tmp_k);
                mat_t_vec_into(&mut state.zeta, &tmp_k, 1.0);
                for p in 0..m {
                    state.zeta[p] = (rhs[p] - state.zeta[p]) / c;
                }
            }
        }
        mat_vec(&mut azeta, &state.zeta);

        y_prev.copy_from_slice(&state.y);
        v_prev.copy_from_slice(&state.v);
        for i in 0..k {
            let relaxed = RELAX * azeta[i] + (1.0 - RELAX) * y_prev[i];
            state.y[i] = (relaxed + state.lam[i]).clamp(lo[i], hi[i]);
            state.lam[i] += relaxed - state.y[i];
        }
        let mut vn_sq = 0.0;
        for p in 0..m {
            let relaxed = RELAX * state.zeta[p] + (1.0 - RELAX) * v_prev[p];
            state.v[p] = relaxed + state.mu[p];
            vn_sq += state.v[p] * state.v[p];
        }
        if vn_sq > 1.0 {
            let f = 1.0 / vn_sq.sqrt();
            for v in state.v.iter_mut() {
                *v *= f;
            }
        }
        for p in 0..m {
            let relaxed = RELAX * state.zeta[p] + (1.0 - RELAX) * v_prev[p];
            state.mu[p] += relaxed - state.v[p];
        }

        if iter % CHECK_EVERY != 0 && iter < opts.max_iters {
            continue;
        }

        let (_, resid) = report(&state.zeta, &azeta);
        let take = resid <= tol || (!have_feasible && resid < ret_resid);
        if take {
            ret_resid = resid;
            ret_z.clear();
            ret_z.extend(state.zeta.iter().map(|&v| v * radius));
            clamp_to_ball(&mut ret_z, radius);
            have_feasible = have_feasible || resid <= tol;
        }

        if resid <= tol {
            feas_streak += 1;
            stall_checks = 0;
            // Dual residual ρ|Aᵀ(y - y_prev) + (v - v_prev)| against the
            // stationarity scale |ρ(Aᵀλ + μ)|.
            let mut rd_sq = 0.0;
            let mut stat_sq = 0.0;
            {
                for i in 0..k {
                    tmp_k[i] = state.y[i] - y_prev[i];
                }
                mat_t_vec_into(&mut dual_vec, &tmp_k, 1.0);
                for p in 0..m {
                    let rd = state.rho * (dual_vec[p] + state.v[p] - v_prev[p]);
                    rd_sq += rd * rd;
                }
                mat_t_vec_into(&mut dual_vec, &state.lam, 1.0);
                for p in 0..m {
                    let s = state.rho * (dual_vec[p] + state.mu[p]);
                    stat_sq += s * s;
                }
            }
            let rd = rd_sq.sqrt();
            if rd < rd_best * 0.99 {
                rd_best = rd;
                rd_flat = 0;
            } else {
                rd_flat += 1;
            }
            let dual_ok =
                rd <= (m as f64).sqrt() * 1e-10 + opts.rel_tol * stat_sq.sqrt().max(1e-12);
            // A feasible iterate whose dual residual has plateaued is as
            // optimal as this penalty path will get.
            if dual_ok || (feas_streak >= 4 && rd_flat >= 4) {
                return Ok((ret_z, resid, iter, true));
            }
        } else {
            feas_streak = 0;
            // Infeasibility certificate: when ball and slabs have an empty
            // intersection, the dual increments settle into a fixed
            // direction (du, dw) that the constraint matrix annihilates
            // while both support functions point strictly away; such a
            // direction proves no feasible point exists at these slacks.
            let mut du_sq = 0.0;
            for i in 0..k {
                let d = state.lam[i] - lam_chk[i];
                tmp_k[i] = d;
                du_sq += d * d;
            }
            let mut dw_sq = 0.0;
            for p in 0..m {
                let d = state.mu[p] - mu_chk[p];
                dw[p] = d;
                dw_sq += d * d;
            }
            let dir_scale = (du_sq + dw_sq).sqrt();
            if dir_scale > 1e-14 {
                mat_t_vec_into(&mut tmp_m, &tmp_k, 1.0);
                let mut null_sq = 0.0;
                for p in 0..m {
                    let v = tmp_m[p] + dw[p];
                    null_sq += v * v;
                }
                let mut support = dw_sq.sqrt();
                for i in 0..k {
                    support += if tmp_k[i] > 0.0 {
                        tmp_k[i] * hi[i]
                    } else {
                        tmp_k[i] * lo[i]
                    };
                }
                if null_sq.sqrt() <= 1e-6 * dir_scale && support <= -1e-6 * dir_scale {
                    return Ok((ret_z, ret_resid, iter, false));
                }
            }
            // Stall watch: a near-feasible hover is usually an active-set
            // artifact that blending toward the feasible anchor settles
            // without widening the slacks. Progress is measured on both
            // the clamped violation and the splitting's consensus gap:
            // slow dual accumulation can freeze the former for hundreds
            // of iterations while the run is still converging, so a hard
            // bailout is taken only after a long dead window.
            let mut rp_sq = 0.0;
            for i in 0..k {
                let d = azeta[i] - state.y[i];
                rp_sq += d * d;
            }
            for p in 0..m {
                let d = state.zeta[p] - state.v[p];
                rp_sq += d * d;
            }
            let rp = rp_sq.sqrt();
            let moved = resid < best_infeas * (1.0 - 1e-4) || rp < best_rp * (1.0 - 1e-3);
            best_infeas = best_infeas.min(resid);
            best_rp = best_rp.min(rp);
            if moved {
                stall_checks = 0;
            } else {
                stall_checks += 1;
                if stall_checks >= 3 && resid <= 1e4 * tol {
                    if let Some((pz, presid)) = slater_round(
                        slabs, widen, vac_viol, &anchor.0, &anchor.1, &state.zeta, &azeta, radius,
                    ) {
                        if presid <= tol {
                            return Ok((pz, presid, iter, true));
                        }
                    }
                }
                if stall_checks >= 24 && !have_feasible {
                    return Ok((ret_z, ret_resid, iter, false));
                }
            }
        }

        // Residual balancing: scale ρ by the primal/dual residual ratio so
        // a lopsided run reaches the right penalty in a few moves. Scaled
        // duals move inversely, keeping the unscaled multipliers intact.
        if iter % (5 * CHECK_EVERY) == 0 && rho_moves < 20 {
            let mut rp_sq = 0.0;
            for i in 0..k {
                let d = azeta[i] - state.y[i];
                rp_sq += d * d;
            }
            for p in 0..m {
                let d = state.zeta[p] - state.v[p];
                rp_sq += d * d;
            }
            let mut rd_sq = 0.0;
            {
                for i in 0..k {
                    tmp_k[i] = state.y[i] - y_prev[i];
                }
                mat_t_vec_into(&mut tmp_m, &tmp_k, 1.0);
                for p in 0..m {
                    let rd = state.rho * (tmp_m[p] + state.v[p] - v_prev[p]);
                    rd_sq += rd * rd;
                }
            }
            let (rp, rd_bal) = (rp_sq.sqrt(), rd_sq.sqrt());
            let tau = if rd_bal > 0.0 {
                (rp / rd_bal).sqrt().clamp(0.2, 5.0)
            } else if rp > tol {
                5.0
            } else {
                1.0
            };
            let rho_new = (state.rho * tau).clamp(1e-6, 1e6);
            let tau = rho_new / state.rho;
            if !(0.8..=1.25).contains(&tau) {
                state.rho = rho_new;
                for l in state.lam.iter_mut() {
                    *l /= tau;
                }
                for u in state.mu.iter_mut() {
                    *u /= tau;
                }
                c = match obj.kind {
                    ObjectiveKind::Nonlinear => 2.0 + state.rho,
                    ObjectiveKind::InnerProd => state.rho,
                };
                factor = cache.factor(c, state.rho)?;
                rho_moves += 1;
            }
        }
        lam_chk.copy_from_slice(&state.lam);
        mu_chk.copy_from_slice(&state.mu);
    }
    // Budget exhausted: a feasible iterate still counts, with optimality
    // only as good as the iterations allowed.
    if !have_feasible && ret_resid <= 1e4 * tol {
        mat_vec(&mut azeta, &state.zeta);
        if let Some((pz, presid)) = slater_round(
            slabs, widen, vac_viol, &anchor.0, &anchor.1, &state.zeta, &azeta, radius,
        ) {
            if presid <= tol {
                return Ok((pz, presid, opts.max_iters, true));
            }
        }
    }
    Ok((ret_z, ret_resid, opts.max_iters, have_feasible))
}

/// Minimizes the objective over ball ∩ slabs.
///
/// `max(radius, 1) * feas_tol` is the absolute feasibility target. If the
/// intersection appears empty (residual stalls above target) the slacks
/// are widened and the attempt restarts, up to `max_escalations` times;
/// a zero-normal slab that excludes everything even at the widest slack
/// fails immediately instead.
pub fn solve(cs: &ConstraintSystem, obj: &Objective, opts: &SolverOptions) -> Result<SolverResult> {
    let m = obj.drift.len();
    if cs.rows.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: cs.rows.ncols() });
    }
    let k = cs.rows.nrows();
    if cs.targets.len() != k || cs.slacks.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: cs.targets.len().max(cs.slacks.len()),
        });
    }
    if !(cs.radius >= 0.0) || !cs.radius.is_finite() {
        return Err(Error::InvalidInput(format!("bad radius {}", cs.radius)));
    }
    if let Some((i, s)) = cs.slacks.iter().enumerate().find(|(_, s)| !(**s >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative slack {s} at row {i}")));
    }

    let mut keep = Vec::with_capacity(k);
    let mut vacuous = Vec::new();
    for i in 0..k {
        let a = cs.rows.row(i);
        if a.dot(&a) > 0.0 {
            keep.push(i);
        } else if cs.targets[i].abs() > cs.slacks[i] {
            // Zero normal with an out-of-reach target: feasible only if
            // some escalation widens the slack past |b|.
            let max_slack =
                cs.slacks[i] * opts.escalation_factor.powi(opts.max_escalations as i32);
            if cs.slacks[i] == 0.0 || cs.targets[i].abs() > max_slack {
                return Err(Error::StructurallyInfeasible {
                    index: i,
                    b_abs: cs.targets[i].abs(),
                    slack: cs.slacks[i],
                });
            }
            vacuous.push(i);
        }
    }

    // r = 0 pins z to the origin; the builder only emits zero targets
    // then, so this is exact for built systems and honest for others.
    if cs.radius == 0.0 {
        let z = vec![0.0; m];
        let resid = worst_slab_violation(&z, &cs.rows, &cs.targets, &cs.slacks).max(0.0);
        return Ok(SolverResult {
            objective: obj.value(&z),
            feas_residual: resid,
            z,
            iterations: 0,
            escalations: 0,
            effective_epsilon: cs.epsilon,
            converged: true,
        });
    }

    let tol = opts.feas_tol * cs.radius.max(1.0);
    let slabs = ScaledSlabs::build(cs, &keep);
    let cache = if slabs.k() > 0 { Some(NormalCache::build(&slabs, m)) } else { None };

    let drift = obj.drift.as_slice().expect("drift is contiguous");
    let dn = drift.iter().map(|v| v * v).sum::<f64>().sqrt();
    let init = project_ball(&obj.initial_point(), cs.radius);
    let mut state = AdmmState {
        zeta: init.iter().map(|&v| v / cs.radius).collect(),
        y: vec![0.0; slabs.k()],
        v: vec![0.0; m],
        lam: vec![0.0; slabs.k()],
        mu: vec![0.0; m],
        rho: opts.rho,
    };
    state.v.copy_from_slice(&state.zeta);

    // Rounding anchor: the clamped initial point, which the constraint
    // builder makes strictly feasible whenever the map distorts the
    // relevant inner products by less than the slack budget. Its slab
    // values are fixed once; widening only grows the box around them.
    let anchor: (Vec<f64>, Vec<f64>) = {
        let az = slabs
            .rows
            .rows()
            .into_iter()
            .map(|row| {
                let row = row.to_slice().expect("slab rows are contiguous");
                row.iter().zip(&state.zeta).map(|(a, b)| a * b).sum()
            })
            .collect();
        (state.zeta.clone(), az)
    };

    let mut eps_eff = cs.epsilon;
    let mut widen = 1.0;
    let mut total_iters = 0usize;
    let mut best: Option<SolverResult> = None;

    for attempt in 0..=opts.max_escalations {
        let vac_viol = vacuous
            .iter()
            .map(|&i| cs.targets[i].abs() - cs.slacks[i] * widen)
            .fold(0.0f64, f64::max);

        let (z, resid, iters, converged) = if vac_viol > tol {
            // No correction changes a vacuous row; only widening applies.
            (Vec::new(), vac_viol, 0, false)
        } else if slabs.k() == 0 {
            // Ball-only program: both objectives have closed forms, the
            // projection of -d and the antipode of the drift direction.
            let mut z: Vec<f64> = match obj.kind {
                ObjectiveKind::Nonlinear => drift.iter().map(|&d| -d).collect(),
                ObjectiveKind::InnerProd => {
                    if dn == 0.0 {
                        vec![0.0; m]
                    } else {
                        drift.iter().map(|&d| -d * cs.radius / dn).collect()
                    }
                }
            };
            clamp_to_ball(&mut z, cs.radius);
            (z, vac_viol.max(0.0), 0, true)
        } else {
            let cache = cache.as_ref().expect("cache built when slabs exist");
            let (z, resid, iters, converged) = admm_attempt(
                &slabs,
                widen,
                vac_viol.max(0.0),
                obj,
                cache,
                &mut state,
                &anchor,
                opts,
                cs.radius,
                tol,
            )?;
            (z, resid, iters, converged)
        };
        total_iters += iters;

        if converged || !z.is_empty() {
            let candidate = SolverResult {
                objective: obj.value(&z),
                feas_residual: resid,
                z,
                iterations: total_iters,
                escalations: attempt,
                effective_epsilon: eps_eff,
                converged,
            };
            if converged {
                return Ok(candidate);
            }
            let better = match &best {
                Some(b) => candidate.feas_residual < b.feas_residual,
                None => true,
            };
            if better {
                best = Some(candidate);
            }
        }
        if attempt < opts.max_escalations {
            eps_eff *= opts.escalation_factor;
            widen *= opts.escalation_factor;
        }
    }
    let best = best.unwrap_or_else(|| SolverResult {
        objective: obj.value(&vec![0.0; m]),
        feas_residual: f64::INFINITY,
        z: vec![0.0; m],
        iterations: total_iters,
        escalations: opts.max_escalations,
        effective_epsilon: eps_eff,
        converged: false,
    });
    Err(Error::Infeasible {
        residual: best.feas_residual,
        escalations: opts.max_escalations,
        best: Box::new(best),
    })
}

/// Lifts a solved correction into `m + 1` dimensions:
/// `(Пx_nn + z, sqrt(r^2 - |z|^2))`. The radicand is clamped at zero for
/// roundoff; a norm exceeding `r` by more than 1e-9 relative is an error.
pub fn lift(z: &[f64], mapped_nn: ArrayView1<f64>, r: f64) -> Result<Array1<f64>> {
    let m = mapped_nn.len();
    if z.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: z.len() });
    }
    let nz_sq: f64 = z.iter().map(|v| v * v).sum();
    let nz = nz_sq.sqrt();
    if nz > r * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "correction norm {nz} exceeds ball radius {r} beyond tolerance"
        )));
    }
    let mut out = Array1::zeros(m + 1);
    for i in 0..m {
        out[i] = mapped_nn[i] + z[i];
    }
    out[m] = (r * r - nz_sq).max(0.0).sqrt();
    Ok(out)
}
