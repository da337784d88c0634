//! Structural properties of the fitted embedders that should hold for
//! any inputs, checked over randomized shapes.

mod common;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use temb::embed::{FittedEmbedder, Strategy};
use temb::rng::GaussianSource;
use temb::solver::SolverOptions;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut src = GaussianSource::new(seed);
    let mut out = Array2::zeros((rows, cols));
    for v in out.iter_mut() {
        *v = src.next();
    }
    out
}

fn gaussian_vec(len: usize, seed: u64) -> Array1<f64> {
    let mut src = GaussianSource::new(seed);
    let mut out = Array1::zeros(len);
    for v in out.iter_mut() {
        *v = src.next();
    }
    out
}

fn l2(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The query-to-anchor distance survives the embedding exactly, for
    /// both terminal objectives, at any shape.
    #[test]
    fn terminal_embedding_is_isometric_to_the_anchor(
        seed in 0u64..1_000_000,
        n_ambient in 3usize..40,
        m in 1usize..12,
        n_train in 2usize..9,
        nonlinear in any::<bool>(),
    ) {
        let train = gaussian_matrix(n_train, n_ambient, seed);
        let u = gaussian_vec(n_ambient, seed ^ 0x5EED);
        let strategy = if nonlinear { Strategy::TerminalNonlinear } else { Strategy::TerminalInnerProd };
        let opts = SolverOptions { max_escalations: 6, ..SolverOptions::default() };
        let emb = FittedEmbedder::fit(strategy, train.clone(), m, seed ^ 0x3A7, 0.4, opts).unwrap();
        let f_u = emb.embed(u.view()).unwrap();
        prop_assert_eq!(f_u.len(), m + 1);

        let images = emb.train_images();
        let mut r = f64::INFINITY;
        let mut nn = 0;
        for i in 0..n_train {
            let d = l2(&train.row(i).to_owned(), &u);
            if d < r {
                r = d;
                nn = i;
            }
        }
        let d_emb = l2(&f_u, &images.row(nn).to_owned());
        prop_assert!((d_emb - r).abs() <= 1e-9 * r.max(1.0));
        // The lift coordinate is the nonnegative branch of the radical.
        prop_assert!(f_u[m] >= 0.0);
    }

    /// The linear strategy is the mapped point with a zero lift column.
    #[test]
    fn linear_embedding_is_padded_map_image(
        seed in 0u64..1_000_000,
        n_ambient in 2usize..30,
        m in 1usize..10,
    ) {
        let train = gaussian_matrix(3, n_ambient, seed);
        let u = gaussian_vec(n_ambient, seed ^ 0x11);
        let emb = FittedEmbedder::fit(
            Strategy::Linear, train, m, seed, 0.1, SolverOptions::default(),
        ).unwrap();
        let f_u = emb.embed(u.view()).unwrap();
        let img = emb.map().unwrap().apply(u.view()).unwrap();
        prop_assert_eq!(f_u.len(), m + 1);
        for j in 0..m {
            prop_assert_eq!(f_u[j].to_bits(), img[j].to_bits());
        }
        prop_assert_eq!(f_u[m].to_bits(), 0f64.to_bits());
    }

    /// Batch embedding is the same computation as one row at a time.
    #[test]
    fn batch_embedding_matches_per_row_embeds(
        seed in 0u64..100_000,
        n_ambient in 4usize..24,
        n_train in 3usize..8,
        n_query in 1usize..5,
    ) {
        let train = gaussian_matrix(n_train, n_ambient, seed);
        let queries = gaussian_matrix(n_query, n_ambient, seed ^ 0xD15);
        let opts = SolverOptions { max_escalations: 6, ..SolverOptions::default() };
        let emb = FittedEmbedder::fit(
            Strategy::TerminalNonlinear, train, 6, seed, 0.4, opts,
        ).unwrap();
        let batch = emb.embed_rows(&queries.view()).unwrap();
        for (q, out) in queries.rows().into_iter().zip(batch.rows()) {
            let single = emb.embed(q).unwrap();
            for (a, b) in out.iter().zip(single.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
