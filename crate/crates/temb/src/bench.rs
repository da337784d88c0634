//! Experiment harness: compressive nearest-neighbor classification,
//! nonlinearity and distortion measurements, and the noisy two-manifold
//! distance test.
//!
//! The classification protocol embeds a labeled train set, embeds each
//! test point with the same fitted embedder, and predicts the label of
//! the nearest embedded train point. Runs are deterministic given the
//! config seed: the map for a given `m` is derived from it (and shared
//! across strategies so they compete on the same linear map), splits and
//! samplers use derived seeds, and all reductions happen in index order.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{circle_distance, sample_manifold, stratified_split, LabeledSet, ManifoldKind};
use crate::embed::{FittedEmbedder, Strategy};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::solver::{nearest_index, SolverOptions, SolverResult};

/// Classification experiment parameters. Defaults match the desk-scale
/// protocol on the bundled digit images; the generous escalation budget
/// absorbs tight constraint systems at small `m` on low-dimensional
/// inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub m_list: Vec<usize>,
    pub epsilon: f64,
    pub strategies: Vec<Strategy>,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub solver: SolverOptions,
    /// When false, the timing column is written as zero so two runs of
    /// the same config produce byte-identical outputs.
    pub record_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            m_list: vec![8, 16, 24, 32],
            epsilon: 0.3,
            strategies: Strategy::ALL.to_vec(),
            per_class_train: 100,
            per_class_test: 20,
            solver: SolverOptions { max_escalations: 5, ..SolverOptions::default() },
            record_timings: true,
        }
    }
}

/// One (strategy, m) run's measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub m: usize,
    /// Successful classification percentage over the test set.
    pub accuracy: f64,
    /// Mean of `|f(u) - (Пu, 0)| / |(Пu, 0)| * 100` over test points;
    /// zero for the identity and linear strategies by construction.
    pub mean_nonlinearity: f64,
    /// Test points excluded from the nonlinearity mean (`Пu = 0`).
    pub nonlinearity_excluded: usize,
    /// Largest embedded-over-original distance ratio, anchors vs rest.
    pub max_dist: f64,
    /// Smallest such ratio.
    pub min_dist: f64,
    pub mean_embed_seconds: f64,
    pub total_escalations: u64,
    pub mean_solver_iterations: f64,
}

/// Full experiment output: config echo, data provenance, one record per
/// (strategy, m).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: String,
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
}

fn l2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Embeds every row of `test`, timing each embed, and collects solver
/// stats from terminal strategies.
fn embed_all(
    embedder: &FittedEmbedder,
    test: &ArrayView2<f64>,
    record_timings: bool,
) -> Result<(Array2<f64>, Vec<Option<SolverResult>>, f64)> {
    let rows: Vec<Result<(Array1<f64>, Option<SolverResult>, f64)>> = test
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|u| {
            if record_timings {
                let t0 = Instant::now();
                let (out, stats) = embedder.embed_with_stats(u)?;
                Ok((out, stats, t0.elapsed().as_secs_f64()))
            } else {
                let (out, stats) = embedder.embed_with_stats(u)?;
                Ok((out, stats, 0.0))
            }
        })
        .collect();
    let mut embedded = Array2::zeros((test.nrows(), embedder.output_dim()));
    let mut all_stats = Vec::with_capacity(test.nrows());
    let mut seconds = 0.0;
    for (i, row) in rows.into_iter().enumerate() {
        let (out, stats, secs) = row?;
        embedded.row_mut(i).assign(&out);
        all_stats.push(stats);
        seconds += secs;
    }
    let mean_seconds = if record_timings { seconds / test.nrows().max(1) as f64 } else { 0.0 };
    Ok((embedded, all_stats, mean_seconds))
}

/// Largest and smallest `|F(u) - F(x)| / |u - x|` with `x` ranging over
/// train points and `u` over everything else (train and test), skipping
/// coincident pairs.
fn distortion_extremes(
    train: &ArrayView2<f64>,
    images: &ArrayView2<f64>,
    test: &ArrayView2<f64>,
    embedded_test: &ArrayView2<f64>,
) -> Result<(f64, f64)> {
    let n = train.nrows();
    let per_anchor: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = train.row(i);
            let fx = images.row(i);
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = l2(x, train.row(j));
                if d == 0.0 {
                    continue;
                }
                let r = l2(fx, images.row(j)) / d;
                hi = hi.max(r);
                lo = lo.min(r);
            }
            for j in 0..test.nrows() {
                let d = l2(x, test.row(j));
                if d == 0.0 {
                    continue;
                }
                let r = l2(fx, embedded_test.row(j)) / d;
                hi = hi.max(r);
                lo = lo.min(r);
            }
            (hi, lo)
        })
        .collect();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (h, l) in per_anchor {
        hi = hi.max(h);
        lo = lo.min(l);
    }
    if !hi.is_finite() || !lo.is_finite() {
        return Err(Error::InvalidInput("no distinct pairs for distortion ratios".into()));
    }
    Ok((hi, lo))
}

/// Runs one (strategy, m) cell of the classification protocol.
pub fn run_one(
    train: &LabeledSet,
    test: &LabeledSet,
    strategy: Strategy,
    m: usize,
    map_seed: u64,
    epsilon: f64,
    solver: &SolverOptions,
    record_timings: bool,
) -> Result<RunRecord> {
    let embedder = FittedEmbedder::fit(
        strategy,
        train.points.clone(),
        m,
        map_seed,
        epsilon,
        solver.clone(),
    )?;
    let images = embedder.train_images();
    let (embedded, stats, mean_embed_seconds) =
        embed_all(&embedder, &test.points.view(), record_timings)?;

    let mut correct = 0usize;
    for (i, row) in embedded.rows().into_iter().enumerate() {
        let nn = nearest_index(&images.view(), row)?;
        if train.labels[nn] == test.labels[i] {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / test.len().max(1) as f64 * 100.0;

    // Relative distance between each embedded test point and where the
    // bare linear map would have put it.
    let (mean_nonlinearity, nonlinearity_excluded) = match embedder.map() {
        Some(map) if strategy != Strategy::Linear => {
            let mut sum = 0.0;
            let mut counted = 0usize;
            let mut excluded = 0usize;
            for (i, u) in test.points.rows().into_iter().enumerate() {
                let lin = map.apply(u)?;
                let lin_norm = lin.dot(&lin).sqrt();
                if lin_norm == 0.0 {
                    excluded += 1;
                    continue;
                }
                let f = embedded.row(i);
                let mut dev = 0.0;
                for (k, v) in lin.iter().enumerate() {
                    let t = f[k] - v;
                    dev += t * t;
                }
                dev += f[lin.len()] * f[lin.len()];
                sum += dev.sqrt() / lin_norm * 100.0;
                counted += 1;
            }
            (if counted > 0 { sum / counted as f64 } else { 0.0 }, excluded)
        }
        _ => (0.0, 0),
    };

    let (max_dist, min_dist) = distortion_extremes(
        &train.points.view(),
        &images.view(),
        &test.points.view(),
        &embedded.view(),
    )?;

    let mut total_escalations = 0u64;
    let mut iter_sum = 0usize;
    let mut solved = 0usize;
    for s in stats.into_iter().flatten() {
        total_escalations += s.escalations as u64;
        iter_sum += s.iterations;
        solved += 1;
    }
    let mean_solver_iterations = if solved > 0 { iter_sum as f64 / solved as f64 } else { 0.0 };

    Ok(RunRecord {
        strategy,
        m,
        accuracy,
        mean_nonlinearity,
        nonlinearity_excluded,
        max_dist,
        min_dist,
        mean_embed_seconds,
        total_escalations,
        mean_solver_iterations,
    })
}

/// Splits the corpus per config and sweeps strategies over the `m`
/// grid. The same derived map seed serves every strategy at a given
/// `m`, so curves differ only in query placement.
pub fn run_experiment(
    config: &ExperimentConfig,
    corpus: &LabeledSet,
    provenance: &str,
) -> Result<ExperimentReport> {
    if config.m_list.is_empty() {
        return Err(Error::InvalidConfig("m_list must not be empty".into()));
    }
    if config.strategies.is_empty() {
        return Err(Error::InvalidConfig("strategies must not be empty".into()));
    }
    let (train, test) =
        stratified_split(corpus, config.per_class_train, config.per_class_test, config.seed)?;
    let mut records = Vec::new();
    for &strategy in &config.strategies {
        for &m in &config.m_list {
            let map_seed = derive_seed(config.seed, "map", m as u64);
            records.push(run_one(
                &train,
                &test,
                strategy,
                m,
                map_seed,
                config.epsilon,
                &config.solver,
                config.record_timings,
            )?);
        }
    }
    Ok(ExperimentReport {
        provenance: provenance.to_string(),
        config: config.clone(),
        records,
    })
}

/// Writes any serializable report as pretty JSON.
pub fn write_report_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes per-run curves as CSV. Float cells use shortest round-trip
/// formatting, so identical runs give identical bytes.
pub fn write_curves_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out =
        String::from("strategy,m,accuracy,mean_nonlinearity,maxdist,mindist,mean_embed_seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.strategy,
            r.m,
            r.accuracy,
            r.mean_nonlinearity,
            r.max_dist,
            r.min_dist,
            r.mean_embed_seconds
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Noisy two-circle distance experiment parameters. Both circles live
/// in the (1, 2) coordinate plane, the second shifted by `gap` along
/// coordinate 3. `epsilon` is the distortion level the embedded
/// distances are checked against; `solver_epsilon` is the (smaller)
/// constraint slack scale used when fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TubeConfig {
    pub seed: u64,
    pub n_dim: usize,
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
    pub radius: f64,
    pub gap: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub solver_epsilon: f64,
    pub m: usize,
    pub strategy: Strategy,
    pub solver: SolverOptions,
}

impl Default for TubeConfig {
    fn default() -> Self {
        TubeConfig {
            seed: 1,
            n_dim: 12,
            n_train_per_class: 60,
            n_test_per_class: 40,
            radius: 1.0,
            gap: 10.0,
            delta: 0.1,
            epsilon: 0.2,
            solver_epsilon: 0.2,
            m: 1200,
            strategy: Strategy::TerminalNonlinear,
            // Queries nearly colinear with their anchor and a neighbor
            // leave no slack for the map's contraction of that direction,
            // so a deep escalation reserve is cheaper than a larger m.
            solver: SolverOptions { max_escalations: 5, ..SolverOptions::default() },
        }
    }
}

/// Tube experiment outcome. A violation is a (test, train) pair whose
/// embedded distance leaves
/// `[(1-eps)(|z - t| - 2 delta), (1+eps)(|z - t| + 2 delta)]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeReport {
    pub config: TubeConfig,
    pub accuracy: f64,
    pub violations: usize,
    pub pairs_checked: usize,
    /// Largest `|d-tilde(z) - d(z, union of circles)|` over test points,
    /// where d-tilde is the distance to the nearest embedded anchor.
    pub max_estimator_error: f64,
    pub total_escalations: u64,
}

/// Samples noisy train/test sets from the two circles, fits the
/// configured embedder on the combined train set, and audits embedded
/// distances and nearest-anchor classification.
pub fn run_tube_experiment(config: &TubeConfig) -> Result<TubeReport> {
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in (0,1), got {}",
            config.epsilon
        )));
    }
    if !(config.gap > 4.0 * config.delta) {
        return Err(Error::InvalidConfig(format!(
            "gap {} must clear the noise tubes (delta {})",
            config.gap, config.delta
        )));
    }
    let circles = [
        ManifoldKind::Circle { radius: config.radius, center: vec![] },
        ManifoldKind::Circle { radius: config.radius, center: vec![0.0, 0.0, config.gap] },
    ];
    let mut train_points = Array2::zeros((2 * config.n_train_per_class, config.n_dim));
    let mut train_labels = Vec::with_capacity(2 * config.n_train_per_class);
    let mut test_points = Array2::zeros((2 * config.n_test_per_class, config.n_dim));
    let mut test_labels = Vec::with_capacity(2 * config.n_test_per_class);
    for (c, kind) in circles.iter().enumerate() {
        let tr = sample_manifold(
            kind,
            config.n_train_per_class,
            config.n_dim,
            config.delta,
            derive_seed(config.seed, "tube-train", c as u64),
        )?;
        let te = sample_manifold(
            kind,
            config.n_test_per_class,
            config.n_dim,
            config.delta,
            derive_seed(config.seed, "tube-test", c as u64),
        )?;
        for i in 0..config.n_train_per_class {
            train_points.row_mut(c * config.n_train_per_class + i).assign(&tr.row(i));
            train_labels.push(c as u8);
        }
        for i in 0..config.n_test_per_class {
            test_points.row_mut(c * config.n_test_per_class + i).assign(&te.row(i));
            test_labels.push(c as u8);
        }
    }

    let embedder = FittedEmbedder::fit(
        config.strategy,
        train_points.clone(),
        config.m,
        derive_seed(config.seed, "tube-map", config.m as u64),
        config.solver_epsilon,
        config.solver.clone(),
    )?;
    let images = embedder.train_images();
    let (embedded, stats, _) = embed_all(&embedder, &test_points.view(), false)?;

    let mut correct = 0usize;
    let mut violations = 0usize;
    let mut max_estimator_error = 0.0f64;
    let eps = config.epsilon;
    let slack = 2.0 * config.delta;
    for (i, fz) in embedded.rows().into_iter().enumerate() {
        let z = test_points.row(i);
        let mut nearest = f64::INFINITY;
        let mut nearest_label = 0u8;
        for (j, ft) in images.rows().into_iter().enumerate() {
            let true_d = l2(z, train_points.row(j));
            let emb_d = l2(fz, ft);
            let lo = (1.0 - eps) * (true_d - slack);
            let hi = (1.0 + eps) * (true_d + slack);
            if emb_d < lo - 1e-9 || emb_d > hi + 1e-9 {
                violations += 1;
            }
            if emb_d < nearest {
                nearest = emb_d;
                nearest_label = train_labels[j];
            }
        }
        if nearest_label == test_labels[i] {
            correct += 1;
        }
        let d_union = circle_distance(z, config.radius, &[])?
            .min(circle_distance(z, config.radius, &[0.0, 0.0, config.gap])?);
        max_estimator_error = max_estimator_error.max((nearest - d_union).abs());
    }

    let total_escalations =
        stats.into_iter().flatten().map(|s| s.escalations as u64).sum();
    Ok(TubeReport {
        config: config.clone(),
        accuracy: correct as f64 / test_labels.len().max(1) as f64 * 100.0,
        violations,
        pairs_checked: test_labels.len() * train_labels.len(),
        max_estimator_error,
        total_escalations,
    })
}
