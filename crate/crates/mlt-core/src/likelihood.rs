//! Log-likelihood, analytic score and observed Fisher information of a
//! transformation model under exact, left-, right- and interval-censored
//! observations with optional truncation.
//!
//! All interval probabilities are evaluated in log space so that
//! transformation values far in the tails do not underflow.

use crate::basis::{BasisError, BasisSpec, ConstraintSystem};
use crate::data::{Bound, Dataset, Observation, Response};
use crate::dist::ErrorDist;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum LikelihoodError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("log-likelihood is -inf (infeasible parameter or empty probability)")]
    NonFinite,
    #[error("count observation {0} above the declared maximum {1}")]
    CountAboveCap(f64, usize),
    #[error("observation {index}: {source}")]
    Row {
        index: usize,
        source: Box<LikelihoodError>,
    },
    #[error("constraint system dimension {0} does not match basis dimension {1}")]
    ConstraintDim(usize, usize),
    #[error("continuous response requires a derivative-capable response basis")]
    NoSmoothResponse,
}

/// Sample-space kind of the response.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ResponseKind {
    Continuous,
    /// Ordered levels `1..=levels`; level `levels` maps to `h = +inf`.
    Discrete { levels: usize },
    /// Counts on `0..=max` evaluated at `floor(y)`, each datum treated as
    /// the lattice interval `(floor(y) - 1, floor(y)]`.
    CountFloor { max: usize },
}

/// Fixed additive offset in the transformation, `h = c^T theta + offset(y)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Offset {
    /// `log(y)` with derivative `1/y` (exponential AFT).
    LogY,
}

/// The model triple: error distribution, joint basis and constraints.
#[derive(Debug, Clone)]
pub struct TransformationModel {
    pub error: ErrorDist,
    pub basis: BasisSpec,
    pub constraints: ConstraintSystem,
    pub response: ResponseKind,
    pub offset: Option<Offset>,
    /// Evaluate interval-censored rows of continuous models by the
    /// midpoint density approximation instead of the exact interval
    /// probability.
    pub midpoint_density: bool,
}

impl TransformationModel {
    pub fn new(
        error: ErrorDist,
        basis: BasisSpec,
        constraints: ConstraintSystem,
        response: ResponseKind,
    ) -> Result<Self, LikelihoodError> {
        Self::with_offset(error, basis, constraints, response, None)
    }

    /// As [`TransformationModel::new`] with a fixed response offset; an
    /// offset counts as the response-smooth term for continuous models.
    pub fn with_offset(
        error: ErrorDist,
        basis: BasisSpec,
        constraints: ConstraintSystem,
        response: ResponseKind,
        offset: Option<Offset>,
    ) -> Result<Self, LikelihoodError> {
        if constraints.dim() != basis.dim() {
            return Err(LikelihoodError::ConstraintDim(
                constraints.dim(),
                basis.dim(),
            ));
        }
        if matches!(response, ResponseKind::Continuous)
            && offset.is_none()
            && !has_smooth_response(&basis)
        {
            return Err(LikelihoodError::NoSmoothResponse);
        }
        Ok(TransformationModel {
            error,
            basis,
            constraints,
            response,
            offset,
            midpoint_density: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn offset_value(&self, y: f64) -> (f64, f64) {
        match self.offset {
            Some(Offset::LogY) => (y.ln(), 1.0 / y),
            None => (0.0, 0.0),
        }
    }

    /// Transformation value `h(y | x)`; clamps Bernstein arguments to the
    /// support (prediction use).
    pub fn h(&self, theta: &DVector<f64>, y: f64, x: &[f64]) -> Result<f64, LikelihoodError> {
        let row = self.basis.eval(y, x, true)?;
        Ok(row.dot(theta) + self.offset_value(y).0)
    }

    /// Derivative `h'(y | x)` for continuous models.
    pub fn h_deriv(&self, theta: &DVector<f64>, y: f64, x: &[f64]) -> Result<f64, LikelihoodError> {
        let drow = self.basis.deriv(y, x, true)?;
        Ok(drow.dot(theta) + self.offset_value(y).1)
    }
}

fn has_smooth_response(spec: &BasisSpec) -> bool {
    match spec {
        BasisSpec::Bernstein { .. } | BasisSpec::Linear | BasisSpec::LogLinear => true,
        BasisSpec::Concat { parts } => parts.iter().any(has_smooth_response),
        BasisSpec::Kronecker { left, .. } => has_smooth_response(left),
        _ => false,
    }
}

/// Transformation value at an interval endpoint.
enum HPoint {
    Finite {
        row: DVector<f64>,
        h: f64,
    },
    NegInf,
    PosInf,
}

fn point_at(
    model: &TransformationModel,
    bound: Bound,
    x: &[f64],
    theta: &DVector<f64>,
) -> Result<HPoint, LikelihoodError> {
    let y = match bound {
        Bound::NegInf => return Ok(HPoint::NegInf),
        Bound::PosInf => return Ok(HPoint::PosInf),
        Bound::Finite(y) => y,
    };
    match model.response {
        ResponseKind::Continuous => {
            let row = model.basis.eval(y, x, false)?;
            let h = row.dot(theta) + model.offset_value(y).0;
            Ok(HPoint::Finite { row, h })
        }
        ResponseKind::Discrete { levels } => {
            let k = y.round() as i64;
            if k <= 0 {
                Ok(HPoint::NegInf)
            } else if k >= levels as i64 {
                Ok(HPoint::PosInf)
            } else {
                let row = model.basis.eval(k as f64, x, false)?;
                let h = row.dot(theta);
                Ok(HPoint::Finite { row, h })
            }
        }
        ResponseKind::CountFloor { max } => {
            let k = y.floor();
            if k < 0.0 {
                Ok(HPoint::NegInf)
            } else if k > max as f64 {
                Err(LikelihoodError::CountAboveCap(y, max))
            } else {
                let row = model.basis.eval(k, x, false)?;
                let h = row.dot(theta);
                Ok(HPoint::Finite { row, h })
            }
        }
    }
}

/// Interval bounds of an observation on the response scale used by the
/// model (lattice intervals for discrete and count responses).
fn interval_bounds(model: &TransformationModel, resp: &Response) -> (Bound, Bound) {
    match model.response {
        ResponseKind::Continuous => (resp.lower(), resp.upper()),
        ResponseKind::Discrete { .. } | ResponseKind::CountFloor { .. } => match resp {
            Response::Exact(y) => {
                let k = y.floor();
                (Bound::Finite(k - 1.0), Bound::Finite(k))
            }
            Response::Left(u) => (Bound::NegInf, Bound::Finite(u.floor())),
            Response::Right(l) => (Bound::Finite(l.floor()), Bound::PosInf),
            Response::Interval(l, u) => (Bound::Finite(l.floor()), Bound::Finite(u.floor())),
        },
    }
}

/// `log(F(h_hi) - F(h_lo))`; `-inf` signals an empty or infeasible
/// interval.
fn log_interval_prob(dist: ErrorDist, lo: &HPoint, hi: &HPoint) -> f64 {
    let finite_ok = |h: f64| !(dist == ErrorDist::Exp && h < 0.0);
    match (lo, hi) {
        (HPoint::NegInf, HPoint::PosInf) => 0.0,
        (HPoint::NegInf, HPoint::Finite { h, .. }) => {
            if finite_ok(*h) {
                dist.log_cdf(*h)
            } else {
                // below the exponential domain the cdf is exactly zero
                f64::NEG_INFINITY
            }
        }
        (HPoint::Finite { h, .. }, HPoint::PosInf) => {
            if finite_ok(*h) {
                dist.log_sf(*h)
            } else {
                f64::NEG_INFINITY
            }
        }
        (HPoint::Finite { h: a, .. }, HPoint::Finite { h: b, .. }) => {
            if a >= b || !finite_ok(*a) && !finite_ok(*b) {
                return f64::NEG_INFINITY;
            }
            if !finite_ok(*a) {
                // lower endpoint below the exponential domain: F(a) = 0
                return dist.log_cdf(*b);
            }
            if !finite_ok(*b) {
                return f64::NEG_INFINITY;
            }
            if a + b < 0.0 {
                let (la, lb) = (dist.log_cdf(*a), dist.log_cdf(*b));
                lb + (-(la - lb).exp()).ln_1p()
            } else {
                let (sa, sb) = (dist.log_sf(*a), dist.log_sf(*b));
                sa + (-(sb - sa).exp()).ln_1p()
            }
        }
        _ => f64::NEG_INFINITY,
    }
}

/// Density weight `f(h) / P` at a finite endpoint, zero at infinite ones.
fn endpoint_weight(dist: ErrorDist, p: &HPoint, log_prob: f64) -> f64 {
    match p {
        HPoint::Finite { h, .. } => {
            if dist == ErrorDist::Exp && *h < 0.0 {
                0.0
            } else {
                (dist.log_pdf(*h) - log_prob).exp()
            }
        }
        _ => 0.0,
    }
}

/// Per-observation log-likelihood; `-inf` (not an error) signals an
/// infeasible parameter so optimizers can backtrack.
pub fn loglik_obs(
    model: &TransformationModel,
    theta: &DVector<f64>,
    obs: &Observation,
    x: &[f64],
) -> Result<f64, LikelihoodError> {
    let ll = match exact_continuous_value(model, obs) {
        Some(y) => exact_loglik(model, theta, y, x)?,
        None => {
            let (lo, hi) = interval_bounds(model, &obs.response);
            let plo = point_at(model, lo, x, theta)?;
            let phi = point_at(model, hi, x, theta)?;
            log_interval_prob(model.error, &plo, &phi)
        }
    };
    match obs.truncation {
        None => Ok(ll),
        Some((tl, tu)) => {
            let plo = point_at(model, tl, x, theta)?;
            let phi = point_at(model, tu, x, theta)?;
            let lt = log_interval_prob(model.error, &plo, &phi);
            if lt == f64::NEG_INFINITY {
                Ok(f64::NEG_INFINITY)
            } else {
                Ok(ll - lt)
            }
        }
    }
}

/// The response value to use on the exact-continuous (density) path, if
/// any.
fn exact_continuous_value(model: &TransformationModel, obs: &Observation) -> Option<f64> {
    if !matches!(model.response, ResponseKind::Continuous) {
        return None;
    }
    match obs.response {
        Response::Exact(y) => Some(y),
        Response::Interval(l, u) if model.midpoint_density => Some(0.5 * (l + u)),
        _ => None,
    }
}

fn exact_loglik(
    model: &TransformationModel,
    theta: &DVector<f64>,
    y: f64,
    x: &[f64],
) -> Result<f64, LikelihoodError> {
    let row = model.basis.eval(y, x, false)?;
    let drow = model.basis.deriv(y, x, false)?;
    let (off, doff) = model.offset_value(y);
    let h = row.dot(theta) + off;
    let hp = drow.dot(theta) + doff;
    if hp <= 0.0 || (model.error == ErrorDist::Exp && h < 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(model.error.log_pdf(h) + hp.ln())
}

/// Analytic score (gradient of the log-likelihood) of one observation.
pub fn score_obs(
    model: &TransformationModel,
    theta: &DVector<f64>,
    obs: &Observation,
    x: &[f64],
) -> Result<DVector<f64>, LikelihoodError> {
    let mut s = match exact_continuous_value(model, obs) {
        Some(y) => exact_score(model, theta, y, x)?,
        None => {
            let (lo, hi) = interval_bounds(model, &obs.response);
            interval_score(model, theta, lo, hi, x)?
        }
    };
    if let Some((tl, tu)) = obs.truncation {
        s -= interval_score(model, theta, tl, tu, x)?;
    }
    Ok(s)
}

fn exact_score(
    model: &TransformationModel,
    theta: &DVector<f64>,
    y: f64,
    x: &[f64],
) -> Result<DVector<f64>, LikelihoodError> {
    let row = model.basis.eval(y, x, false)?;
    let drow = model.basis.deriv(y, x, false)?;
    let (off, doff) = model.offset_value(y);
    let h = row.dot(theta) + off;
    let hp = drow.dot(theta) + doff;
    if hp <= 0.0 || (model.error == ErrorDist::Exp && h < 0.0) {
        return Err(LikelihoodError::NonFinite);
    }
    Ok(&row * model.error.log_density_ratio(h) + drow / hp)
}

fn interval_score(
    model: &TransformationModel,
    theta: &DVector<f64>,
    lo: Bound,
    hi: Bound,
    x: &[f64],
) -> Result<DVector<f64>, LikelihoodError> {
    let plo = point_at(model, lo, x, theta)?;
    let phi = point_at(model, hi, x, theta)?;
    let lp = log_interval_prob(model.error, &plo, &phi);
    if lp == f64::NEG_INFINITY {
        return Err(LikelihoodError::NonFinite);
    }
    let mut s = DVector::zeros(model.dim());
    if let HPoint::Finite { row, .. } = &phi {
        s += row * endpoint_weight(model.error, &phi, lp);
    }
    if let HPoint::Finite { row, .. } = &plo {
        s -= row * endpoint_weight(model.error, &plo, lp);
    }
    Ok(s)
}

/// Observed Fisher information (negative Hessian) of one observation.
pub fn fisher_obs(
    model: &TransformationModel,
    theta: &DVector<f64>,
    obs: &Observation,
    x: &[f64],
) -> Result<DMatrix<f64>, LikelihoodError> {
    let mut f = match exact_continuous_value(model, obs) {
        Some(y) => exact_fisher(model, theta, y, x)?,
        None => {
            let (lo, hi) = interval_bounds(model, &obs.response);
            interval_fisher(model, theta, lo, hi, x)?
        }
    };
    if let Some((tl, tu)) = obs.truncation {
        f -= interval_fisher(model, theta, tl, tu, x)?;
    }
    Ok(f)
}

fn exact_fisher(
    model: &TransformationModel,
    theta: &DVector<f64>,
    y: f64,
    x: &[f64],
) -> Result<DMatrix<f64>, LikelihoodError> {
    let row = model.basis.eval(y, x, false)?;
    let drow = model.basis.deriv(y, x, false)?;
    let (off, doff) = model.offset_value(y);
    let h = row.dot(theta) + off;
    let hp = drow.dot(theta) + doff;
    if hp <= 0.0 || (model.error == ErrorDist::Exp && h < 0.0) {
        return Err(LikelihoodError::NonFinite);
    }
    let r1 = model.error.log_density_ratio(h);
    let r2 = model.error.curvature_ratio(h);
    let mut f = &row * row.transpose() * (r1 * r1 - r2);
    f += &drow * drow.transpose() / (hp * hp);
    Ok(f)
}

fn interval_fisher(
    model: &TransformationModel,
    theta: &DVector<f64>,
    lo: Bound,
    hi: Bound,
    x: &[f64],
) -> Result<DMatrix<f64>, LikelihoodError> {
    let plo = point_at(model, lo, x, theta)?;
    let phi = point_at(model, hi, x, theta)?;
    let lp = log_interval_prob(model.error, &plo, &phi);
    if lp == f64::NEG_INFINITY {
        return Err(LikelihoodError::NonFinite);
    }
    let d = model.dim();
    let mut v = DVector::zeros(d);
    let mut a = DMatrix::zeros(d, d);
    if let HPoint::Finite { row, h } = &phi {
        let w = endpoint_weight(model.error, &phi, lp);
        v += row * w;
        a += row * row.transpose() * (model.error.log_density_ratio(*h) * w);
    }
    if let HPoint::Finite { row, h } = &plo {
        let w = endpoint_weight(model.error, &plo, lp);
        v -= row * w;
        a -= row * row.transpose() * (model.error.log_density_ratio(*h) * w);
    }
    // -Hessian = v v^T - d(f' terms)/dtheta
    Ok(&v * v.transpose() - a)
}

/// What to accumulate over a dataset.
pub enum Reducer {
    Loglik,
    Score,
    Fisher,
}

/// Result of a total() call.
pub enum Total {
    Loglik(f64),
    Score(DVector<f64>),
    Fisher(DMatrix<f64>),
}

/// Total log-likelihood via compensated summation; `-inf` if any row is
/// infeasible.
pub fn total_loglik(
    model: &TransformationModel,
    theta: &DVector<f64>,
    data: &Dataset,
) -> Result<f64, LikelihoodError> {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (i, (obs, x)) in data.observations.iter().zip(&data.covariates).enumerate() {
        let ll = loglik_obs(model, theta, obs, x).map_err(|e| LikelihoodError::Row {
            index: i,
            source: Box::new(e),
        })?;
        if ll == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        // Kahan update
        let t = ll - comp;
        let s = sum + t;
        comp = (s - sum) - t;
        sum = s;
    }
    Ok(sum)
}

/// Total score with per-coordinate compensated summation.
pub fn total_score(
    model: &TransformationModel,
    theta: &DVector<f64>,
    data: &Dataset,
) -> Result<DVector<f64>, LikelihoodError> {
    let d = model.dim();
    let mut sum = DVector::zeros(d);
    let mut comp = DVector::zeros(d);
    for (i, (obs, x)) in data.observations.iter().zip(&data.covariates).enumerate() {
        let s = score_obs(model, theta, obs, x).map_err(|e| LikelihoodError::Row {
            index: i,
            source: Box::new(e),
        })?;
        for j in 0..d {
            let t: f64 = s[j] - comp[j];
            let ns = sum[j] + t;
            comp[j] = (ns - sum[j]) - t;
            sum[j] = ns;
        }
    }
    Ok(sum)
}

/// Summed observed Fisher information.
pub fn total_fisher(
    model: &TransformationModel,
    theta: &DVector<f64>,
    data: &Dataset,
) -> Result<DMatrix<f64>, LikelihoodError> {
    let d = model.dim();
    let mut sum = DMatrix::zeros(d, d);
    for (i, (obs, x)) in data.observations.iter().zip(&data.covariates).enumerate() {
        let f = fisher_obs(model, theta, obs, x).map_err(|e| LikelihoodError::Row {
            index: i,
            source: Box::new(e),
        })?;
        sum += f;
    }
    Ok(sum)
}

pub fn total(
    model: &TransformationModel,
    theta: &DVector<f64>,
    data: &Dataset,
    reducer: Reducer,
) -> Result<Total, LikelihoodError> {
    Ok(match reducer {
        Reducer::Loglik => Total::Loglik(total_loglik(model, theta, data)?),
        Reducer::Score => Total::Score(total_score(model, theta, data)?),
        Reducer::Fisher => Total::Fisher(total_fisher(model, theta, data)?),
    })
}
