//! Helpers shared by the integration suites: a coarse-to-fine grid
//! oracle for the constrained programs and a generator of small random
//! instances with a certified interior point.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use temb::rng::{uniform_f64, GaussianSource};
use temb::solver::{ConstraintSystem, Objective};

/// A random ball-and-slabs program together with the interior point it
/// was built around, so oracles can start from certified feasibility.
pub struct TinyInstance {
    pub cs: ConstraintSystem,
    pub interior: Vec<f64>,
}

/// Builds an instance with `m <= 3` unknowns and at most five slabs, all
/// holding at the interior point with at least 60% of the slack to
/// spare. Row norms, slack fractions and target jitter are drawn wide
/// enough to exercise scaling paths without ever leaving the solver a
/// genuinely empty intersection.
pub fn random_tiny_instance(seed: u64) -> TinyInstance {
    let mut src = GaussianSource::new(seed);
    let m = 1 + (uniform_f64(src.rng()) * 3.0) as usize;
    let m = m.min(3);
    let n = 2 + (uniform_f64(src.rng()) * 5.0) as usize;
    let k = n.min(6) - 1;
    let radius = 0.6 + 0.8 * uniform_f64(src.rng());

    let mut interior = vec![0.0; m];
    src.fill(&mut interior);
    let nz = interior.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target_norm = 0.5 * radius * uniform_f64(src.rng());
    if nz > 0.0 {
        for v in interior.iter_mut() {
            *v *= target_norm / nz;
        }
    }

    let mut rows = Array2::zeros((k, m));
    let mut targets = Vec::with_capacity(k);
    let mut slacks = Vec::with_capacity(k);
    for i in 0..k {
        let mut a = vec![0.0; m];
        src.fill(&mut a);
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = (0.5 + 1.5 * uniform_f64(src.rng())) / na.max(1e-12);
        for (j, v) in a.iter().enumerate() {
            rows[[i, j]] = v * scale;
        }
        let norm = na * scale;
        let s = (0.3 + 0.3 * uniform_f64(src.rng())) * radius * norm;
        let center: f64 = rows.row(i).dot(&Array1::from_vec(interior.clone()));
        let jitter = (2.0 * uniform_f64(src.rng()) - 1.0) * 0.2 * s;
        targets.push(center + jitter);
        slacks.push(s);
    }

    TinyInstance {
        cs: ConstraintSystem { radius, rows, targets, slacks, epsilon: 0.1, nn_index: 0 },
        interior,
    }
}

/// Random drift for the instance; `scale` is relative to the radius.
pub fn random_drift(seed: u64, m: usize, radius: f64, scale: f64) -> Array1<f64> {
    let mut src = GaussianSource::new(seed);
    let mut d = vec![0.0; m];
    src.fill(&mut d);
    let nd = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let want = scale * radius * uniform_f64(src.rng());
    if nd > 0.0 {
        for v in d.iter_mut() {
            *v *= want / nd;
        }
    }
    Array1::from_vec(d)
}

fn feasible(cs: &ConstraintSystem, z: &[f64]) -> bool {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    if r2 > cs.radius * cs.radius {
        return false;
    }
    for i in 0..cs.rows.nrows() {
        let v: f64 = cs.rows.row(i).iter().zip(z).map(|(a, b)| a * b).sum();
        if (v - cs.targets[i]).abs() > cs.slacks[i] {
            return false;
        }
    }
    true
}

/// Coarse-to-fine grid search over the feasible set, refining a
/// `[-8, 8]^m` cell window around the incumbent until the cell size
/// reaches `final_step`. The first window is wide enough to cover the
/// whole ball, and the search is seeded with a known feasible point so
/// the incumbent never goes missing. Returns the best objective value
/// found on feasible grid nodes (an upper bound on the true minimum).
pub fn grid_oracle_min(
    cs: &ConstraintSystem,
    obj: &Objective,
    start: &[f64],
    final_step: f64,
) -> f64 {
    let m = cs.rows.ncols();
    assert!(m <= 3, "grid oracle is for tiny instances only");
    assert!(feasible(cs, start), "oracle start point must be feasible");
    let span: i64 = 8;
    let mut center = start.to_vec();
    let mut best = obj.value(start);
    let mut step = cs.radius / 4.0;
    loop {
        let mut idx = vec![-span; m];
        let mut improved: Option<Vec<f64>> = None;
        'sweep: loop {
            let z: Vec<f64> =
                center.iter().zip(&idx).map(|(&c, &i)| c + i as f64 * step).collect();
            if feasible(cs, &z) {
                let v = obj.value(&z);
                if v < best {
                    best = v;
                    improved = Some(z);
                }
            }
            for d in 0..m {
                idx[d] += 1;
                if idx[d] <= span {
                    continue 'sweep;
                }
                idx[d] = -span;
            }
            break;
        }
        if let Some(node) = improved {
            center = node;
        }
        if step <= final_step {
            return best;
        }
        step = (step * 0.5).max(final_step * 0.999_999);
    }
}

/// `n` equally spaced points on the unit circle in the first two of
/// `n_dim` coordinates, rotated by `offset` grid steps.
pub fn circle_points(n: usize, offset: f64, n_dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, n_dim));
    for k in 0..n {
        let th = 2.0 * std::f64::consts::PI * (k as f64 + offset) / n as f64;
        out[[k, 0]] = th.cos();
        out[[k, 1]] = th.sin();
    }
    out
}
