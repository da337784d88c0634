//! Embedding strategies over a fixed train set.
//!
//! A fitted embedder owns the train points and, except in the identity
//! case, a Gaussian map `П`. Train points always land exactly on their
//! anchors: the identity keeps them in place, the linear strategy sends
//! `x` to `(Пx, 0)`, and the two terminal strategies place every train
//! point at `(Пx, 0)` as well but move each query `u` to
//! `(Пx_nn + z, sqrt(r^2 - |z|^2))`, where `x_nn` is the nearest train
//! point, `r = |u - x_nn|`, and `z` solves a small constrained program
//! keeping embedded inner products against all anchor differences close
//! to the originals. The two terminal flavors differ only in the
//! objective: one drifts as far from the linear image as the constraints
//! allow, the other stays as close to it as possible.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jl::EmbeddingMap;
use crate::solver::{
    build_constraints, lift, solve, Objective, SolverOptions, SolverResult,
};

/// How queries are placed relative to the train anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Leave points untouched (ambient dimension).
    Identity,
    /// `u -> (Пu, 0)`.
    Linear,
    /// Terminal placement minimizing `<П(x_nn - u), z>`: the feasible
    /// point nearest the linear image.
    TerminalInnerProd,
    /// Terminal placement minimizing `|z|^2 + 2 <П(u - x_nn), z>`: the
    /// feasible point farthest from the linear image.
    TerminalNonlinear,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Identity,
        Strategy::Linear,
        Strategy::TerminalInnerProd,
        Strategy::TerminalNonlinear,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Strategy::Identity => "IDENTITY",
            Strategy::Linear => "LINEAR",
            Strategy::TerminalInnerProd => "TERMINAL_INNER_PROD",
            Strategy::TerminalNonlinear => "TERMINAL_NONLINEAR",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Strategy::TerminalInnerProd | Strategy::TerminalNonlinear)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IDENTITY" => Ok(Strategy::Identity),
            "LINEAR" => Ok(Strategy::Linear),
            "TERMINAL_INNER_PROD" => Ok(Strategy::TerminalInnerProd),
            "TERMINAL_NONLINEAR" => Ok(Strategy::TerminalNonlinear),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy {other:?}; expected IDENTITY, LINEAR, \
                 TERMINAL_INNER_PROD, or TERMINAL_NONLINEAR"
            ))),
        }
    }
}

/// A strategy bound to a train set (and map, when one is needed).
#[derive(Debug, Clone)]
pub struct FittedEmbedder {
    strategy: Strategy,
    map: Option<EmbeddingMap>,
    train: Array2<f64>,
    /// `Пx` per train row; equals `train` for the identity.
    mapped_train: Array2<f64>,
    epsilon: f64,
    options: SolverOptions,
}

impl FittedEmbedder {
    /// Draws the map (seeded) and precomputes train images. `m` and
    /// `seed` are ignored by the identity; `epsilon` only matters for the
    /// terminal strategies.
    pub fn fit(
        strategy: Strategy,
        train: Array2<f64>,
        m: usize,
        seed: u64,
        epsilon: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if train.nrows() == 0 || train.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "train set must be nonempty, got {}x{}",
                train.nrows(),
                train.ncols()
            )));
        }
        if strategy.is_terminal() && (!(epsilon > 0.0) || !epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "terminal strategies need epsilon > 0, got {epsilon}"
            )));
        }
        let (map, mapped_train) = if strategy == Strategy::Identity {
            (None, train.clone())
        } else {
            if m == 0 {
                return Err(Error::InvalidConfig("embedding dimension m must be >= 1".into()));
            }
            let map = EmbeddingMap::gaussian(m, train.ncols(), seed)?;
            let mapped = map.apply_rows(&train)?;
            (Some(map), mapped)
        };
        Ok(FittedEmbedder { strategy, map, train, mapped_train, epsilon, options })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn ambient_dim(&self) -> usize {
        self.train.ncols()
    }

    /// Dimension of embedded outputs: `N` for the identity, `m + 1`
    /// otherwise (the linear image carries an explicit zero slot so all
    /// non-identity strategies share one space).
    pub fn output_dim(&self) -> usize {
        match self.strategy {
            Strategy::Identity => self.train.ncols(),
            _ => self.mapped_train.ncols() + 1,
        }
    }

    pub fn map(&self) -> Option<&EmbeddingMap> {
        self.map.as_ref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn train(&self) -> &Array2<f64> {
        &self.train
    }

    /// Images of the train points, one row per point: the anchors every
    /// query placement is measured against. Bitwise equal to what
    /// `embed` returns on the train points themselves.
    pub fn train_images(&self) -> Array2<f64> {
        match self.strategy {
            Strategy::Identity => self.train.clone(),
            _ => {
                let n = self.mapped_train.nrows();
                let m = self.mapped_train.ncols();
                let mut out = Array2::zeros((n, m + 1));
                out.slice_mut(ndarray::s![.., ..m]).assign(&self.mapped_train);
                out
            }
        }
    }

    pub fn embed(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.embed_with_stats(u).map(|(out, _)| out)
    }

    /// Embeds one query; terminal strategies also return the solver
    /// outcome (`None` when the query is bitwise equal to a train point,
    /// which short-circuits to that anchor).
    pub fn embed_with_stats(
        &self,
        u: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Option<SolverResult>)> {
        if u.len() != self.train.ncols() {
            return Err(Error::DimensionMismatch { expected: self.train.ncols(), got: u.len() });
        }
        match self.strategy {
            Strategy::Identity => Ok((u.to_owned(), None)),
            Strategy::Linear => {
                let map = self.map.as_ref().expect("linear embedder carries a map");
                let img = map.apply(u)?;
                Ok((pad_zero(&img.view()), None))
            }
            Strategy::TerminalInnerProd | Strategy::TerminalNonlinear => {
                if let Some(i) = self.bitwise_train_match(u) {
                    return Ok((pad_zero(&self.mapped_train.row(i)), None));
                }
                let map = self.map.as_ref().expect("terminal embedder carries a map");
                let cs = build_constraints(u, &self.train, &self.mapped_train, self.epsilon)?;
                let drift = &map.apply(u)? - &self.mapped_train.row(cs.nn_index);
                let obj = match self.strategy {
                    Strategy::TerminalNonlinear => Objective::nonlinear(drift),
                    _ => Objective::inner_prod(drift.mapv(|v| -v)),
                };
                let res = solve(&cs, &obj, &self.options)?;
                let out = lift(&res.z, self.mapped_train.row(cs.nn_index), cs.radius)?;
                Ok((out, Some(res)))
            }
        }
    }

    /// Embeds many queries, one row per query.
    pub fn embed_rows(&self, qs: &ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((qs.nrows(), self.output_dim()));
        for (i, q) in qs.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.embed(q)?);
        }
        Ok(out)
    }

    /// First train row bitwise identical to `u`, if any. Bitwise (not
    /// tolerance) so the train fixpoint guarantee is exact.
    fn bitwise_train_match(&self, u: ArrayView1<f64>) -> Option<usize> {
        self.train
            .axis_iter(Axis(0))
            .position(|row| row.iter().zip(u.iter()).all(|(a, b)| a.to_bits() == b.to_bits()))
    }
}

fn pad_zero(v: &ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(v.len() + 1);
    out.slice_mut(ndarray::s![..v.len()]).assign(v);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_seed, GaussianSource};
    use ndarray::array;

    fn random_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut g = GaussianSource::new(seed);
        let mut out = Array2::zeros((n, dim));
        for v in out.iter_mut() {
            *v = g.next();
        }
        out
    }

    #[test]
    fn identity_returns_input() {
        let train = random_points(5, 3, 7);
        let e = FittedEmbedder::fit(
            Strategy::Identity, train.clone(), 0, 0, 0.1, SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(e.output_dim(), 3);
        let u = array![0.5, -1.0, 2.0];
        assert_eq!(e.embed(u.view()).unwrap(), u);
        assert_eq!(e.train_images(), train);
    }

    #[test]
    fn linear_appends_zero_coordinate() {
        let train = random_points(6, 4, 11);
        let e = FittedEmbedder::fit(
            Strategy::Linear, train.clone(), 3, 42, 0.1, SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(e.output_dim(), 4);
        let u = array![1.0, 0.0, -2.0, 0.5];
        let out = e.embed(u.view()).unwrap();
        let img = e.map().unwrap().apply(u.view()).unwrap();
        assert_eq!(out.slice(ndarray::s![..3]).to_owned(), img);
        assert_eq!(out[3], 0.0);
    }

    #[test]
    fn train_points_are_exact_fixpoints() {
        let train = random_points(8, 5, 3);
        for strategy in [Strategy::TerminalNonlinear, Strategy::TerminalInnerProd] {
            let e = FittedEmbedder::fit(
                strategy, train.clone(), 3, 9, 0.2, SolverOptions::default(),
            )
            .unwrap();
            let images = e.train_images();
            for i in 0..train.nrows() {
                let (out, stats) = e.embed_with_stats(train.row(i)).unwrap();
                assert!(stats.is_none(), "train row {i} should short-circuit");
                let img = images.row(i);
                assert_eq!(out.len(), img.len());
                for (a, b) in out.iter().zip(img.iter()) {
                    assert_eq!(a.to_bits(), b.to_bits(), "row {i} not bitwise fixed");
                }
            }
        }
    }

    #[test]
    fn terminal_preserves_anchor_distance() {
        let train = random_points(12, 10, 21);
        let e = FittedEmbedder::fit(
            Strategy::TerminalNonlinear, train.clone(), 6, 5, 0.3, SolverOptions::default(),
        )
        .unwrap();
        let mut g = GaussianSource::new(derive_seed(21, "query", 0));
        for t in 0..5 {
            let mut u = Array1::zeros(10);
            for v in u.iter_mut() {
                *v = g.next();
            }
            let nn = crate::solver::nearest_index(&train.view(), u.view()).unwrap();
            let r = (&u - &train.row(nn)).mapv(|v: f64| v * v).sum().sqrt();
            let (out, stats) = e.embed_with_stats(u.view()).unwrap();
            let stats = stats.expect("generic query uses the solver");
            assert!(stats.converged, "query {t} failed: {stats:?}");
            let images = e.train_images();
            let d = (&out - &images.row(nn)).mapv(|v: f64| v * v).sum().sqrt();
            assert!(
                (d - r).abs() <= 1e-9 * r.max(1.0),
                "anchor distance drifted: {d} vs {r}"
            );
        }
    }

    #[test]
    fn inner_prod_stays_nearer_linear_image_on_average() {
        let train = random_points(15, 8, 33);
        let mut g = GaussianSource::new(derive_seed(33, "query", 1));
        let opts = SolverOptions::default();
        let near = FittedEmbedder::fit(
            Strategy::TerminalInnerProd, train.clone(), 6, 2, 0.4, opts.clone(),
        )
        .unwrap();
        let far = FittedEmbedder::fit(
            Strategy::TerminalNonlinear, train.clone(), 6, 2, 0.4, opts,
        )
        .unwrap();
        let map = near.map().unwrap();
        let (mut dev_near, mut dev_far) = (0.0, 0.0);
        for _ in 0..8 {
            let mut u = Array1::zeros(8);
            for v in u.iter_mut() {
                *v = g.next();
            }
            let linear = pad_zero(&map.apply(u.view()).unwrap().view());
            let a = near.embed(u.view()).unwrap();
            let b = far.embed(u.view()).unwrap();
            dev_near += (&a - &linear).mapv(|v: f64| v * v).sum().sqrt();
            dev_far += (&b - &linear).mapv(|v: f64| v * v).sum().sqrt();
        }
        assert!(
            dev_near < dev_far,
            "inner-prod deviation {dev_near} should undercut nonlinear {dev_far}"
        );
    }

    #[test]
    fn wrong_query_dimension_is_rejected() {
        let train = random_points(4, 3, 1);
        let e = FittedEmbedder::fit(
            Strategy::Linear, train, 2, 0, 0.1, SolverOptions::default(),
        )
        .unwrap();
        let u = array![1.0, 2.0];
        match e.embed(u.view()) {
            Err(Error::DimensionMismatch { expected: 3, got: 2 }) => {}
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn strategy_tokens_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.token().parse::<Strategy>().unwrap(), s);
        }
        assert!("TERMINAL".parse::<Strategy>().is_err());
        let json = serde_json::to_string(&Strategy::TerminalInnerProd).unwrap();
        assert_eq!(json, "\"TERMINAL_INNER_PROD\"");
    }
}
