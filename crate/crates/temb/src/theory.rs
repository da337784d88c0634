//! Complexity formulas and Gaussian-width estimation.
//!
//! Sizing an embedding dimension for a manifold-shaped data model needs
//! two ingredients: a complexity functional of the manifold (dimension,
//! volume, boundary volume, reach) and the Gaussian width of the unit
//! secants it induces. Both routes to a dimension are provided here, a
//! closed-form bound from the manifold parameters and a width-based
//! bound usable with a Monte Carlo width estimate of any point cloud.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, GaussianSource};

/// Lanczos coefficients, g = 607/128, 15 terms (Godfrey's table). Good
/// to close to machine precision over the positive reals.
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_049e-4,
    2.174_396_181_152_126e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_275e-5,
    -2.619_083_840_158_141e-5,
    3.689_918_265_953_162e-6,
];

/// Natural log of the gamma function for positive arguments; reflection
/// handles the (unused in practice) strip below one half.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return libm::log(std::f64::consts::PI / libm::sin(std::f64::consts::PI * x))
            - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut series = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * libm::log(2.0 * std::f64::consts::PI) + (z + 0.5) * libm::log(t) - t
        + libm::log(series)
}

/// Volume of the unit ball in `d` dimensions: `pi^{d/2} / Gamma(d/2+1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    libm::exp(half * libm::log(std::f64::consts::PI) - ln_gamma(half + 1.0))
}

/// Geometric description of a compact manifold with (possibly empty)
/// boundary: intrinsic dimension, volume, boundary volume, and the
/// smaller of the manifold's reach and its boundary components' reaches.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifoldParams {
    pub intrinsic_dim: usize,
    pub volume: f64,
    pub boundary_volume: f64,
    pub reach: f64,
}

impl ManifoldParams {
    fn validate(&self) -> Result<()> {
        if self.intrinsic_dim == 0 {
            return Err(Error::InvalidInput("intrinsic dimension must be >= 1".into()));
        }
        if !(self.reach > 0.0) || !self.reach.is_finite() {
            return Err(Error::InvalidInput(format!("reach must be positive, got {}", self.reach)));
        }
        if !(self.volume > 0.0) || !self.volume.is_finite() {
            return Err(Error::InvalidInput(format!(
                "volume must be positive, got {}",
                self.volume
            )));
        }
        if !(self.boundary_volume >= 0.0) || !self.boundary_volume.is_finite() {
            return Err(Error::InvalidInput(format!(
                "boundary volume must be nonnegative, got {}",
                self.boundary_volume
            )));
        }
        Ok(())
    }
}

/// First complexity functional: curves get `20 V / tau + V_boundary`,
/// higher dimensions `V/omega_d (41/tau)^d + V_b/omega_{d-1} (81/tau)^{d-1}`.
pub fn complexity_alpha(p: &ManifoldParams) -> Result<f64> {
    p.validate()?;
    let d = p.intrinsic_dim;
    if d == 1 {
        Ok(20.0 * p.volume / p.reach + p.boundary_volume)
    } else {
        let bulk = p.volume / unit_ball_volume(d) * libm::pow(41.0 / p.reach, d as f64);
        let rim =
            p.boundary_volume / unit_ball_volume(d - 1) * libm::pow(81.0 / p.reach, (d - 1) as f64);
        Ok(bulk + rim)
    }
}

/// Second functional: `alpha^2 + 3^d alpha`.
pub fn complexity_beta(alpha: f64, intrinsic_dim: usize) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    Ok(alpha * alpha + libm::pow(3.0, intrinsic_dim as f64) * alpha)
}

/// Width bound for the unit secants of a manifold with complexity
/// `beta`: `8 sqrt(2) sqrt(ln beta + 4d)`.
pub fn secant_width_bound(beta: f64, intrinsic_dim: usize) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let inner = libm::log(beta) + 4.0 * intrinsic_dim as f64;
    if inner < 0.0 {
        return Err(Error::InvalidInput(format!(
            "ln(beta) + 4d = {inner} is negative; width bound undefined"
        )));
    }
    Ok(8.0 * std::f64::consts::SQRT_2 * inner.sqrt())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

fn check_constant(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("constant must be positive, got {c}")));
    }
    Ok(())
}

/// Embedding dimension sufficient for distortion `epsilon` on a manifold
/// of complexity `beta`: `ceil(c (ln beta + 4d) / epsilon^2)`.
pub fn embed_dim_manifold(beta: f64, intrinsic_dim: usize, epsilon: f64, c: f64) -> Result<usize> {
    check_epsilon(epsilon)?;
    check_constant(c)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let inner = libm::log(beta) + 4.0 * intrinsic_dim as f64;
    if inner <= 0.0 {
        return Err(Error::InvalidInput(format!("ln(beta) + 4d = {inner} must be positive")));
    }
    Ok((c * inner / (epsilon * epsilon)).ceil() as usize)
}

/// Embedding dimension from a Gaussian width `w` of a set of unit
/// vectors, with failure probability `p`:
/// `ceil(c ((w + sqrt(ln(2/p))) / epsilon)^2)`.
pub fn embed_dim_width(width: f64, epsilon: f64, c: f64, p: f64) -> Result<usize> {
    check_epsilon(epsilon)?;
    check_constant(c)?;
    if !(width >= 0.0) || !width.is_finite() {
        return Err(Error::InvalidInput(format!("width must be nonnegative, got {width}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "failure probability must lie in (0,1), got {p}"
        )));
    }
    let t = (width + libm::log(2.0 / p).sqrt()) / epsilon;
    Ok((c * t * t).ceil() as usize)
}

/// Monte Carlo estimate of the Gaussian width of a point set:
/// `mean_t max_i <g_t, x_i>`, one fresh standard normal `g_t` per trial.
///
/// Each trial draws from its own derived seed, so the estimate does not
/// depend on thread count or scheduling; the final average is summed in
/// trial order.
pub fn mc_gaussian_width(points: &ArrayView2<f64>, trials: usize, seed: u64) -> Result<f64> {
    if points.nrows() == 0 {
        return Err(Error::InvalidInput("width estimate needs at least one point".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("width estimate needs at least one trial".into()));
    }
    let n_dim = points.ncols();
    let maxima: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut src = GaussianSource::new(derive_seed(seed, "width-trial", t as u64));
            let mut g = vec![0.0f64; n_dim];
            src.fill(&mut g);
            points
                .rows()
                .into_iter()
                .map(|row| row.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(maxima.iter().sum::<f64>() / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ln_gamma_matches_references() {
        // (x, lgamma(x)) pairs, cross-checked against an independent
        // implementation.
        let refs = [
            (0.5, 0.5723649429247004),
            (1.0, 0.0),
            (1.5, -0.12078223763524543),
            (2.0, 0.0),
            (2.5, 0.2846828704729196),
            (3.5, 1.2009736023470738),
            (5.0, 3.178053830347945),
            (7.5, 7.534364236758734),
            (33.0, 81.55795945611503),
        ];
        for (x, want) in refs {
            let got = ln_gamma(x);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "ln_gamma({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn ball_volumes_match_references_and_recurrence() {
        let refs = [
            1.0,
            2.0,
            std::f64::consts::PI,
            4.188790204786391,
            4.934802200544679,
            5.263789013914325,
            5.167712780049969,
            4.724765970331402,
            4.058712126416768,
        ];
        for (d, want) in refs.iter().enumerate() {
            let got = unit_ball_volume(d);
            assert!(
                (got - want).abs() <= 1e-13 * want.max(1.0),
                "omega_{d} = {got}, want {want}"
            );
        }
        // omega_d = omega_{d-2} * 2 pi / d.
        for d in 2..20 {
            let got = unit_ball_volume(d);
            let want = unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64;
            assert!((got - want).abs() <= 1e-12 * want, "recurrence broke at d = {d}");
        }
    }

    #[test]
    fn circle_complexity_chain() {
        // Unit circle: d = 1, V = 2 pi, no boundary, reach 1.
        let p = ManifoldParams {
            intrinsic_dim: 1,
            volume: 2.0 * std::f64::consts::PI,
            boundary_volume: 0.0,
            reach: 1.0,
        };
        let alpha = complexity_alpha(&p).unwrap();
        assert!((alpha - 125.66370614359172).abs() < 1e-10);
        let beta = complexity_beta(alpha, 1).unwrap();
        assert!((beta - 16168.358160173748).abs() < 1e-9);
        let w = secant_width_bound(beta, 1).unwrap();
        assert!((w - 41.86196197790814).abs() < 1e-10);
        assert_eq!(embed_dim_manifold(beta, 1, 0.5, 1.0).unwrap(), 55);
    }

    #[test]
    fn higher_dim_alpha_uses_both_terms() {
        // Sphere S^2 of radius 2: V = 4 pi r^2, closed, reach 2.
        let p = ManifoldParams {
            intrinsic_dim: 2,
            volume: 16.0 * std::f64::consts::PI,
            boundary_volume: 0.0,
            reach: 2.0,
        };
        let alpha = complexity_alpha(&p).unwrap();
        let want = 16.0 * std::f64::consts::PI / std::f64::consts::PI * (41.0f64 / 2.0).powi(2);
        assert!((alpha - want).abs() < 1e-9 * want);
        // Adding boundary volume strictly increases alpha.
        let with_rim = ManifoldParams { boundary_volume: 1.0, ..p };
        assert!(complexity_alpha(&with_rim).unwrap() > alpha);
    }

    #[test]
    fn width_based_dimension_reference() {
        assert_eq!(embed_dim_width(10.0, 0.25, 1.0, 0.5).unwrap(), 1999);
    }

    #[test]
    fn dimension_shrinks_as_epsilon_grows() {
        let beta = 16168.358160173748;
        let coarse = embed_dim_manifold(beta, 1, 0.9, 1.0).unwrap();
        let fine = embed_dim_manifold(beta, 1, 0.1, 1.0).unwrap();
        assert!(coarse < fine);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let p = ManifoldParams {
            intrinsic_dim: 0,
            volume: 1.0,
            boundary_volume: 0.0,
            reach: 1.0,
        };
        assert!(complexity_alpha(&p).is_err());
        let p = ManifoldParams { intrinsic_dim: 1, reach: 0.0, ..p };
        assert!(complexity_alpha(&p).is_err());
        assert!(complexity_beta(-1.0, 1).is_err());
        assert!(secant_width_bound(0.0, 1).is_err());
        assert!(embed_dim_manifold(100.0, 1, 1.5, 1.0).is_err());
        assert!(embed_dim_width(10.0, 0.25, 1.0, 1.0).is_err());
        assert!(embed_dim_width(10.0, 0.25, 0.0, 0.5).is_err());
    }

    #[test]
    fn width_of_symmetric_pair_matches_half_normal_mean() {
        // {e1, -e1}: max(<g, x>) = |g_1|, mean sqrt(2/pi).
        let pts = array![[1.0, 0.0], [-1.0, 0.0]];
        let w = mc_gaussian_width(&pts.view(), 50_000, 7).unwrap();
        assert!((w - 0.7978845608028654).abs() < 0.01, "width {w}");
    }

    #[test]
    fn width_estimate_is_reproducible() {
        let pts = array![[1.0, 0.5], [-0.25, 1.0], [0.0, -1.0]];
        let a = mc_gaussian_width(&pts.view(), 4_096, 99).unwrap();
        let b = mc_gaussian_width(&pts.view(), 4_096, 99).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
