//! Asymptotic inference from a fitted model: Wald intervals for linear
//! combinations of the parameters and simultaneous confidence bands via
//! the max-t multiplier method.

use crate::dist::ErrorDist;
use crate::models::FitResult;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum InferenceError {
    #[error("covariance unavailable (singular Fisher information)")]
    NoCovariance,
    #[error("empty contrast grid")]
    EmptyGrid,
    #[error("confidence level must be in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("contrast has {got} columns, parameter dimension is {expected}")]
    ContrastDim { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldRow {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct Band {
    pub level: f64,
    /// Common multiplier replacing the pointwise z quantile.
    pub multiplier: f64,
    pub points: Vec<WaldRow>,
}

/// Two-sided standard normal critical value, e.g. 1.959964 at level 0.95.
pub fn z_critical(level: f64) -> Result<f64, InferenceError> {
    if !(0.0 < level && level < 1.0) {
        return Err(InferenceError::BadLevel(level));
    }
    Ok(ErrorDist::Normal
        .quantile(0.5 + level / 2.0)
        .expect("interior probability"))
}

/// Pointwise Wald intervals for the rows of `l` applied to the
/// parameter vector.
pub fn wald(fit: &FitResult, l: &DMatrix<f64>, level: f64) -> Result<Vec<WaldRow>, InferenceError> {
    let cov = fit.covariance.as_ref().ok_or(InferenceError::NoCovariance)?;
    if l.ncols() != fit.theta.len() {
        return Err(InferenceError::ContrastDim {
            got: l.ncols(),
            expected: fit.theta.len(),
        });
    }
    let z = z_critical(level)?;
    let est = l * &fit.theta;
    let v = l * cov * l.transpose();
    Ok((0..l.nrows())
        .map(|i| {
            let se = v[(i, i)].max(0.0).sqrt();
            WaldRow {
                estimate: est[i],
                se,
                lower: est[i] - z * se,
                upper: est[i] + z * se,
            }
        })
        .collect())
}

/// Simultaneous confidence band over contrast rows with the default
/// Monte Carlo size of 100000 draws.
pub fn confidence_band(
    fit: &FitResult,
    rows: &[DVector<f64>],
    level: f64,
    seed: u64,
) -> Result<Band, InferenceError> {
    confidence_band_with_draws(fit, rows, level, seed, 100_000)
}

/// Simultaneous band: the multiplier is the `level` quantile of
/// `max_j |T_j|` where `T ~ N(0, R)` and `R` is the correlation of the
/// contrast rows. It is floored at the pointwise z value, and a
/// single-point grid uses z exactly (the max over one coordinate is
/// that coordinate).
pub fn confidence_band_with_draws(
    fit: &FitResult,
    rows: &[DVector<f64>],
    level: f64,
    seed: u64,
    draws: usize,
) -> Result<Band, InferenceError> {
    if rows.is_empty() {
        return Err(InferenceError::EmptyGrid);
    }
    let cov = fit.covariance.as_ref().ok_or(InferenceError::NoCovariance)?;
    let d = fit.theta.len();
    for r in rows {
        if r.len() != d {
            return Err(InferenceError::ContrastDim {
                got: r.len(),
                expected: d,
            });
        }
    }
    let z = z_critical(level)?;
    let k = rows.len();
    let mut est = DVector::zeros(k);
    let mut v = DMatrix::zeros(k, k);
    for i in 0..k {
        est[i] = rows[i].dot(&fit.theta);
        let ci = cov * &rows[i];
        for j in 0..=i {
            let val = rows[j].dot(&ci);
            v[(i, j)] = val;
            v[(j, i)] = val;
        }
    }
    let se: Vec<f64> = (0..k).map(|i| v[(i, i)].max(0.0).sqrt()).collect();

    let multiplier = if k == 1 {
        z
    } else {
        max_t_quantile(&v, &se, level, seed, draws).max(z)
    };

    let points = (0..k)
        .map(|i| WaldRow {
            estimate: est[i],
            se: se[i],
            lower: est[i] - multiplier * se[i],
            upper: est[i] + multiplier * se[i],
        })
        .collect();
    Ok(Band {
        level,
        multiplier,
        points,
    })
}

/// `level` quantile of `max_j |T_j|`, `T ~ N(0, R)`, by Monte Carlo.
fn max_t_quantile(v: &DMatrix<f64>, se: &[f64], level: f64, seed: u64, draws: usize) -> f64 {
    let k = se.len();
    // correlation matrix; degenerate rows keep a unit diagonal
    let mut r = DMatrix::identity(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j && se[i] > 0.0 && se[j] > 0.0 {
                r[(i, j)] = (v[(i, j)] / (se[i] * se[j])).clamp(-1.0, 1.0);
            }
        }
    }
    // factor R = L L^T through its eigendecomposition; R may be
    // rank-deficient for collinear contrast rows
    let eig = r.symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for j in 0..k {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..k {
            l[(i, j)] *= s;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maxima = Vec::with_capacity(draws);
    let mut u = DVector::zeros(k);
    for _ in 0..draws {
        for ui in u.iter_mut() {
            *ui = standard_normal(&mut rng);
        }
        let t = &l * &u;
        maxima.push(t.abs().max());
    }
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // interpolated order-statistic quantile
    let pos = (draws - 1) as f64 * level;
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    if i + 1 < draws {
        maxima[i] * (1.0 - w) + maxima[i + 1] * w
    } else {
        maxima[draws - 1]
    }
}

/// Box-Muller standard normal draw.
pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Observation};
    use crate::models::{fit, ModelSpec};
    use crate::optim::OptimizerConfig;
    use approx::assert_abs_diff_eq;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_fit(n: usize, seed: u64) -> FitResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<Observation> = (0..n)
            .map(|_| Observation::exact(2.0 + 0.5 * standard_normal(&mut rng)))
            .collect();
        let data = Dataset::from_parts(obs, vec![vec![]; n]);
        fit(
            &ModelSpec::Ctm {
                error: crate::dist::ErrorDist::Normal,
                basis: crate::basis::BasisSpec::Linear,
                response: crate::likelihood::ResponseKind::Continuous,
            },
            &data,
            &OptimizerConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn z_critical_is_the_standard_value() {
        assert_abs_diff_eq!(z_critical(0.95).unwrap(), 1.959964, epsilon = 1e-6);
    }

    #[test]
    fn wald_interval_brackets_estimate_symmetrically() {
        let f = gaussian_fit(300, 41);
        let l = DMatrix::identity(2, 2);
        let rows = wald(&f, &l, 0.95).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_abs_diff_eq!(r.estimate, f.theta[i], epsilon = 1e-12);
            assert!(r.se > 0.0);
            assert_abs_diff_eq!(r.upper - r.estimate, r.estimate - r.lower, epsilon = 1e-10);
            assert_abs_diff_eq!(
                r.upper - r.lower,
                2.0 * 1.959964 * r.se,
                epsilon = 1e-5 * r.se
            );
        }
    }

    #[test]
    fn single_point_band_equals_wald() {
        let f = gaussian_fit(200, 42);
        let row = DVector::from_vec(vec![1.0, 0.5]);
        let band = confidence_band(&f, &[row.clone()], 0.95, 7).unwrap();
        let l = DMatrix::from_rows(&[row.transpose()]);
        let w = wald(&f, &l, 0.95).unwrap();
        assert_abs_diff_eq!(band.multiplier, z_critical(0.95).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(band.points[0].lower, w[0].lower, epsilon = 1e-9);
        assert_abs_diff_eq!(band.points[0].upper, w[0].upper, epsilon = 1e-9);
    }

    #[test]
    fn band_multiplier_dominates_z_and_grows_with_grid() {
        let f = gaussian_fit(200, 43);
        let z = z_critical(0.95).unwrap();
        let mut prev = 0.0;
        for k in [1usize, 5, 20] {
            let rows: Vec<DVector<f64>> = (0..k)
                .map(|i| DVector::from_vec(vec![1.0, i as f64 / k.max(1) as f64]))
                .collect();
            let band = confidence_band_with_draws(&f, &rows, 0.95, 11, 20_000).unwrap();
            assert!(band.multiplier >= z - 1e-12, "k={k}");
            assert!(band.multiplier >= prev - 0.02, "k={k}");
            prev = band.multiplier;
        }
    }

    #[test]
    fn band_multiplier_reproducible_across_seeds_to_half_percent() {
        let f = gaussian_fit(400, 44);
        let rows: Vec<DVector<f64>> = (0..20)
            .map(|i| DVector::from_vec(vec![1.0, i as f64 / 20.0]))
            .collect();
        let b1 = confidence_band(&f, &rows, 0.95, 0).unwrap();
        let b2 = confidence_band(&f, &rows, 0.95, 3).unwrap();
        assert!(
            (b1.multiplier - b2.multiplier).abs() / b1.multiplier < 0.005,
            "{} vs {}",
            b1.multiplier,
            b2.multiplier
        );
    }

    #[test]
    fn identical_seeds_are_deterministic() {
        let f = gaussian_fit(100, 45);
        let rows: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_vec(vec![1.0, i as f64]))
            .collect();
        let b1 = confidence_band_with_draws(&f, &rows, 0.9, 5, 5_000).unwrap();
        let b2 = confidence_band_with_draws(&f, &rows, 0.9, 5, 5_000).unwrap();
        assert_eq!(b1.multiplier, b2.multiplier);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let f = gaussian_fit(100, 46);
        assert!(matches!(
            confidence_band(&f, &[], 0.95, 1),
            Err(InferenceError::EmptyGrid)
        ));
    }
}
