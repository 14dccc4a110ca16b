//! Plug-in prediction functionals of a fitted transformation model and
//! sampling by the probability integral transform.

use crate::basis::{BasisSpec, Support};
use crate::likelihood::{LikelihoodError, ResponseKind, TransformationModel};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PredictError {
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Dist(#[from] crate::dist::DistError),
    #[error("probability must be in (0, 1), got {0}")]
    BadProbability(f64),
    #[error("functional unavailable for this response kind")]
    Unsupported,
}

/// The prediction functionals of the plug-in estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictWhat {
    /// Transformation value `h(y | x)`.
    Trafo,
    Distribution,
    Density,
    Quantile(f64),
    Hazard,
    CumHazard,
    Odds,
}

/// Evaluate one functional at `(y, x)`; for `Quantile(p)` the `y`
/// argument is ignored.
pub fn predict(
    model: &TransformationModel,
    theta: &DVector<f64>,
    x: &[f64],
    y: f64,
    what: PredictWhat,
) -> Result<f64, PredictError> {
    if let PredictWhat::Quantile(p) = what {
        return quantile(model, theta, x, p);
    }
    match model.response {
        ResponseKind::Continuous => {
            let h = model.h(theta, y, x)?;
            let z = model.error;
            Ok(match what {
                PredictWhat::Trafo => h,
                PredictWhat::Distribution => z.cdf(h)?,
                PredictWhat::Density => {
                    let hp = model.h_deriv(theta, y, x)?;
                    z.pdf(h) * hp.max(0.0)
                }
                PredictWhat::Hazard => {
                    let hp = model.h_deriv(theta, y, x)?;
                    (z.log_pdf(h) - z.log_sf(h)).exp() * hp.max(0.0)
                }
                PredictWhat::CumHazard => -z.log_sf(h),
                PredictWhat::Odds => (z.log_cdf(h) - z.log_sf(h)).exp(),
                PredictWhat::Quantile(_) => unreachable!(),
            })
        }
        ResponseKind::Discrete { .. } | ResponseKind::CountFloor { .. } => {
            let f = discrete_cdf(model, theta, x, y)?;
            Ok(match what {
                PredictWhat::Trafo => {
                    if f >= 1.0 {
                        f64::INFINITY
                    } else {
                        model.h(theta, y, x)?
                    }
                }
                PredictWhat::Distribution => f,
                PredictWhat::Density => {
                    let prev = discrete_cdf(model, theta, x, y - 1.0)?;
                    f - prev
                }
                PredictWhat::Hazard => {
                    let prev = discrete_cdf(model, theta, x, y - 1.0)?;
                    (f - prev) / (1.0 - prev)
                }
                PredictWhat::CumHazard => -(1.0 - f).max(f64::MIN_POSITIVE).ln(),
                PredictWhat::Odds => f / (1.0 - f),
                PredictWhat::Quantile(_) => unreachable!(),
            })
        }
    }
}

/// `F(y | x)` on the level/count lattice; values below the first level
/// give 0 and at or above the top level give 1.
fn discrete_cdf(
    model: &TransformationModel,
    theta: &DVector<f64>,
    x: &[f64],
    y: f64,
) -> Result<f64, PredictError> {
    let (lo, hi) = match model.response {
        ResponseKind::Discrete { levels } => (1.0, levels as f64),
        ResponseKind::CountFloor { max } => (0.0, max as f64),
        ResponseKind::Continuous => return Err(PredictError::Unsupported),
    };
    let k = y.floor();
    if k < lo {
        return Ok(0.0);
    }
    if k >= hi {
        return Ok(1.0);
    }
    let h = model.h(theta, k, x)?;
    Ok(model.error.cdf(h).unwrap_or(0.0))
}

/// Response support for inversion: the Bernstein support when present,
/// otherwise a bracket grown from a unit interval.
fn response_support(spec: &BasisSpec) -> Option<Support> {
    match spec {
        BasisSpec::Bernstein { support, .. } => Some(support.clone()),
        BasisSpec::Concat { parts } => parts.iter().find_map(response_support),
        BasisSpec::Kronecker { left, .. } => response_support(left),
        _ => None,
    }
}

/// Monotone inversion `F^{-1}(p | x)`; results outside the support are
/// reported as the nearest boundary.
pub fn quantile(
    model: &TransformationModel,
    theta: &DVector<f64>,
    x: &[f64],
    p: f64,
) -> Result<f64, PredictError> {
    if !(0.0 < p && p < 1.0) {
        return Err(PredictError::BadProbability(p));
    }
    let z = model.error.quantile(p)?;
    invert_h(model, theta, x, z)
}

/// `inf { y : h(y | x) >= z }` by bisection (continuous) or lattice
/// search (discrete/count).
fn invert_h(
    model: &TransformationModel,
    theta: &DVector<f64>,
    x: &[f64],
    z: f64,
) -> Result<f64, PredictError> {
    match model.response {
        ResponseKind::Discrete { levels } => {
            for k in 1..levels {
                if model.h(theta, k as f64, x)? >= z {
                    return Ok(k as f64);
                }
            }
            Ok(levels as f64)
        }
        ResponseKind::CountFloor { max } => {
            for k in 0..=max {
                if model.h(theta, k as f64, x)? >= z {
                    return Ok(k as f64);
                }
            }
            Ok(max as f64)
        }
        ResponseKind::Continuous => {
            let (mut lo, mut hi) = match response_support(&model.basis) {
                Some(s) => (s.lower, s.upper),
                None => bracket(model, theta, x, z)?,
            };
            if model.h(theta, lo, x)? >= z {
                return Ok(lo);
            }
            if model.h(theta, hi, x)? < z {
                return Ok(hi);
            }
            let width = hi - lo;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if model.h(theta, mid, x)? >= z {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if (hi - lo) <= 1e-10 * width {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// Expanding bracket for support-free bases (linear, log-linear).
fn bracket(
    model: &TransformationModel,
    theta: &DVector<f64>,
    x: &[f64],
    z: f64,
) -> Result<(f64, f64), PredictError> {
    let log_scale = uses_log_response(&model.basis) || model.offset.is_some();
    let (mut lo, mut hi) = if log_scale { (1e-12, 1.0) } else { (-1.0, 1.0) };
    for _ in 0..200 {
        if model.h(theta, lo, x)? < z {
            break;
        }
        if log_scale {
            lo /= 4.0;
        } else {
            lo = lo * 2.0 - 1.0;
        }
    }
    for _ in 0..200 {
        if model.h(theta, hi, x)? >= z {
            break;
        }
        hi = hi * 2.0 + 1.0;
    }
    Ok((lo, hi))
}

fn uses_log_response(spec: &BasisSpec) -> bool {
    match spec {
        BasisSpec::LogLinear => true,
        BasisSpec::Concat { parts } => parts.iter().any(uses_log_response),
        BasisSpec::Kronecker { left, .. } => uses_log_response(left),
        _ => false,
    }
}

/// Draw `n` responses at covariate row `x` by the probability integral
/// transform: `Y = inf { y : h(y | x) >= Z }`, `Z ~ F_Z`.
pub fn sample(
    model: &TransformationModel,
    theta: &DVector<f64>,
    x: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, PredictError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u = loop {
            let u: f64 = rng.gen();
            if u > 0.0 && u < 1.0 {
                break u;
            }
        };
        let z = model.error.quantile(u)?;
        out.push(invert_h(model, theta, x, z)?);
    }
    Ok(out)
}

/// Mean absolute deviation between a reference distribution function
/// and the fitted one, per covariate row, summarized over the rows.
pub fn mad_metric(
    reference: impl Fn(f64, &[f64]) -> f64,
    model: &TransformationModel,
    theta: &DVector<f64>,
    y_grid: &[f64],
    x_grid: &[Vec<f64>],
) -> Result<MadSummary, PredictError> {
    let mut mads = Vec::with_capacity(x_grid.len());
    for x in x_grid {
        let mut acc = 0.0;
        for &y in y_grid {
            let fhat = predict(model, theta, x, y, PredictWhat::Distribution)?;
            acc += (reference(y, x) - fhat).abs();
        }
        mads.push(acc / y_grid.len() as f64);
    }
    mads.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = mads.len();
    Ok(MadSummary {
        min: mads[0],
        median: if k % 2 == 1 {
            mads[k / 2]
        } else {
            0.5 * (mads[k / 2 - 1] + mads[k / 2])
        },
        max: mads[k - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}
