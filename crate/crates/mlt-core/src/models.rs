//! Model-zoo constructors, starting values, and the fit pipeline.
//!
//! Each [`ModelSpec`] family assembles the error distribution, joint
//! basis and constraint system of a named transformation model. Shift
//! terms enter the transformation as `+ x^T theta_shift`; the
//! conventional regression coefficients are `beta = -theta_shift` and
//! are reported that way by [`FitResult::shift_coefficients`].

use crate::basis::{
    constraints_for, first_differences, BasisSpec, ConstraintSystem, Support,
};
use crate::data::{Bound, Dataset};
use crate::dist::{DistError, ErrorDist};
use crate::likelihood::{
    total_fisher, total_loglik, total_score, LikelihoodError, Offset, ResponseKind,
    TransformationModel,
};
use crate::optim::{self, OptimError, OptimizerConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("family requires a response support; none given and none derivable from data")]
    MissingSupport,
    #[error("degenerate response: fewer than two distinct finite values")]
    DegenerateResponse,
    #[error("model expects {expected} covariate columns, data has {got}")]
    CovariateColumns { expected: usize, got: usize },
    #[error("invalid field for family: {0}")]
    InvalidField(&'static str),
}

fn default_error_logistic() -> ErrorDist {
    ErrorDist::Logistic
}

fn default_error_normal() -> ErrorDist {
    ErrorDist::Normal
}

/// A named model family with its structural parameters.
///
/// `shift` counts plain covariate columns entering a linear shift term;
/// `varying` counts covariate columns whose effects vary with the
/// response (a Kronecker term with an intercept column). Bernstein
/// supports may be omitted and are then derived from the data at fit
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `Phi(-b0/s + y/s - x b/s)`: the Gaussian linear model, also the
    /// Tobit model when responses are censored.
    NormalLinear { shift: usize },
    LognormalAft { shift: usize },
    LoglogisticAft { shift: usize },
    WeibullAft { shift: usize },
    /// AFT with the log-response coefficient fixed at one.
    ExponentialAft { shift: usize },
    CoxPh {
        order: usize,
        shift: usize,
        #[serde(default)]
        support: Option<Support>,
    },
    PropOdds {
        order: usize,
        shift: usize,
        #[serde(default)]
        support: Option<Support>,
    },
    AdditiveHazards {
        order: usize,
        shift: usize,
        #[serde(default)]
        support: Option<Support>,
    },
    DiscreteOdds { levels: usize, shift: usize },
    DiscreteHazards { levels: usize, shift: usize },
    /// Binary response; the link is the inverse error cdf (logit,
    /// probit, cloglog).
    BinaryGlm { link: ErrorDist, shift: usize },
    /// Cox model with response-varying covariate effects.
    TimeVaryingCox {
        order: usize,
        varying: usize,
        #[serde(default)]
        support: Option<Support>,
    },
    NonPropOdds {
        order: usize,
        varying: usize,
        #[serde(default)]
        support: Option<Support>,
    },
    /// Transformation in one group plus a deviation in the other; the
    /// single covariate column is the group indicator.
    TwoSample {
        order: usize,
        #[serde(default = "default_error_normal")]
        error: ErrorDist,
        #[serde(default)]
        support: Option<Support>,
    },
    /// Response Bernstein crossed with a covariate Bernstein.
    DistributionRegression {
        order: usize,
        cov_order: usize,
        #[serde(default = "default_error_normal")]
        error: ErrorDist,
        #[serde(default)]
        support: Option<Support>,
        #[serde(default)]
        cov_support: Option<Support>,
    },
    CountShift {
        order: usize,
        max: usize,
        shift: usize,
        #[serde(default = "default_error_logistic")]
        error: ErrorDist,
    },
    /// Count model with an extra parameter block for excess zeros.
    CountHurdle {
        order: usize,
        max: usize,
        shift: usize,
        #[serde(default = "default_error_logistic")]
        error: ErrorDist,
    },
    UnconditionalDensity {
        order: usize,
        #[serde(default = "default_error_normal")]
        error: ErrorDist,
        #[serde(default)]
        support: Option<Support>,
    },
    UnconditionalDiscrete {
        levels: usize,
        #[serde(default = "default_error_normal")]
        error: ErrorDist,
    },
    /// Free-form conditional transformation model over an explicit basis.
    Ctm {
        error: ErrorDist,
        basis: BasisSpec,
        response: ResponseKind,
    },
}

impl ModelSpec {
    /// Fill in data-derived supports so the spec round-trips through the
    /// fit artifact without the data.
    pub fn resolve(&self, data: &Dataset) -> Result<ModelSpec, ModelError> {
        let mut spec = self.clone();
        let from_data = |cur: &Option<Support>| -> Result<Option<Support>, ModelError> {
            if cur.is_some() {
                return Ok(cur.clone());
            }
            Support::from_data(data.response_values())
                .map(Some)
                .map_err(|_| ModelError::DegenerateResponse)
        };
        match &mut spec {
            ModelSpec::CoxPh { support, .. }
            | ModelSpec::PropOdds { support, .. }
            | ModelSpec::AdditiveHazards { support, .. }
            | ModelSpec::TimeVaryingCox { support, .. }
            | ModelSpec::NonPropOdds { support, .. }
            | ModelSpec::TwoSample { support, .. }
            | ModelSpec::UnconditionalDensity { support, .. } => {
                *support = from_data(support)?;
            }
            ModelSpec::DistributionRegression {
                support,
                cov_support,
                ..
            } => {
                *support = from_data(support)?;
                if cov_support.is_none() {
                    let col: Vec<f64> = (0..data.n()).map(|i| data.x(i)[0]).collect();
                    *cov_support = Some(
                        Support::from_data(col).map_err(|_| ModelError::DegenerateResponse)?,
                    );
                }
            }
            _ => {}
        }
        Ok(spec)
    }

    /// Assemble the transformation model; supports must be present
    /// (see [`ModelSpec::resolve`]).
    pub fn build(&self) -> Result<TransformationModel, ModelError> {
        let need = |s: &Option<Support>| s.clone().ok_or(ModelError::MissingSupport);
        match self {
            ModelSpec::NormalLinear { shift } => shifted(
                ErrorDist::Normal,
                BasisSpec::Linear,
                *shift,
                ResponseKind::Continuous,
            ),
            ModelSpec::LognormalAft { shift } => shifted(
                ErrorDist::Normal,
                BasisSpec::LogLinear,
                *shift,
                ResponseKind::Continuous,
            ),
            ModelSpec::LoglogisticAft { shift } => shifted(
                ErrorDist::Logistic,
                BasisSpec::LogLinear,
                *shift,
                ResponseKind::Continuous,
            ),
            ModelSpec::WeibullAft { shift } => shifted(
                ErrorDist::Mev,
                BasisSpec::LogLinear,
                *shift,
                ResponseKind::Continuous,
            ),
            ModelSpec::ExponentialAft { shift } => {
                let basis = BasisSpec::Covariates {
                    columns: *shift,
                    intercept: true,
                };
                let cs = ConstraintSystem::empty(basis.dim());
                TransformationModel::with_offset(
                    ErrorDist::Mev,
                    basis,
                    cs,
                    ResponseKind::Continuous,
                    Some(Offset::LogY),
                )
                .map_err(ModelError::Likelihood)
            }
            ModelSpec::CoxPh {
                order,
                shift,
                support,
            } => shifted(
                ErrorDist::Mev,
                BasisSpec::Bernstein {
                    order: *order,
                    support: need(support)?,
                },
                *shift,
                ResponseKind::Continuous,
            ),
            ModelSpec::PropOdds {
                order,
                shift,
                support,
            } => shifted(
                ErrorDist::Logistic,
                BasisSpec::Bernstein {
                    order: *order,
                    support: need(support)?,
                },
                *shift,
                ResponseKind::Continuous,
            ),
            ModelSpec::AdditiveHazards {
                order,
                shift,
                support,
            } => {
                let mut model = shifted(
                    ErrorDist::Exp,
                    BasisSpec::Bernstein {
                        order: *order,
                        support: need(support)?,
                    },
                    *shift,
                    ResponseKind::Continuous,
                )?;
                model.constraints = additive_hazard_constraints(*order, model.dim());
                Ok(model)
            }
            ModelSpec::DiscreteOdds { levels, shift } => shifted(
                ErrorDist::Logistic,
                BasisSpec::Discrete { levels: *levels },
                *shift,
                ResponseKind::Discrete { levels: *levels },
            ),
            ModelSpec::DiscreteHazards { levels, shift } => shifted(
                ErrorDist::Mev,
                BasisSpec::Discrete { levels: *levels },
                *shift,
                ResponseKind::Discrete { levels: *levels },
            ),
            ModelSpec::BinaryGlm { link, shift } => shifted(
                *link,
                BasisSpec::Discrete { levels: 2 },
                *shift,
                ResponseKind::Discrete { levels: 2 },
            ),
            ModelSpec::TimeVaryingCox {
                order,
                varying,
                support,
            } => varying_model(ErrorDist::Mev, *order, need(support)?, *varying),
            ModelSpec::NonPropOdds {
                order,
                varying,
                support,
            } => varying_model(ErrorDist::Logistic, *order, need(support)?, *varying),
            ModelSpec::TwoSample {
                order,
                error,
                support,
            } => varying_model(*error, *order, need(support)?, 1),
            ModelSpec::DistributionRegression {
                order,
                cov_order,
                error,
                support,
                cov_support,
            } => {
                let basis = BasisSpec::kronecker(
                    BasisSpec::Bernstein {
                        order: *order,
                        support: need(support)?,
                    },
                    BasisSpec::CovariateBernstein {
                        order: *cov_order,
                        support: need(cov_support)?,
                        column: 0,
                    },
                )?;
                let cs = constraints_for(&basis);
                TransformationModel::new(*error, basis, cs, ResponseKind::Continuous)
                    .map_err(ModelError::Likelihood)
            }
            ModelSpec::CountShift {
                order,
                max,
                shift,
                error,
            } => shifted(
                *error,
                count_basis(*order, *max),
                *shift,
                ResponseKind::CountFloor { max: *max },
            ),
            ModelSpec::CountHurdle {
                order,
                max,
                shift,
                error,
            } => {
                let mut parts = vec![count_basis(*order, *max)];
                if *shift > 0 {
                    parts.push(BasisSpec::Covariates {
                        columns: *shift,
                        intercept: false,
                    });
                }
                parts.push(BasisSpec::ZeroIndicator);
                if *shift > 0 {
                    parts.push(BasisSpec::ZeroCovariates { columns: *shift });
                }
                let basis = BasisSpec::concat(parts)?;
                let cs = constraints_for(&basis);
                TransformationModel::new(
                    *error,
                    basis,
                    cs,
                    ResponseKind::CountFloor { max: *max },
                )
                .map_err(ModelError::Likelihood)
            }
            ModelSpec::UnconditionalDensity {
                order,
                error,
                support,
            } => {
                let basis = BasisSpec::Bernstein {
                    order: *order,
                    support: need(support)?,
                };
                let cs = constraints_for(&basis);
                TransformationModel::new(*error, basis, cs, ResponseKind::Continuous)
                    .map_err(ModelError::Likelihood)
            }
            ModelSpec::UnconditionalDiscrete { levels, error } => {
                let basis = BasisSpec::Discrete { levels: *levels };
                let cs = constraints_for(&basis);
                TransformationModel::new(
                    *error,
                    basis,
                    cs,
                    ResponseKind::Discrete { levels: *levels },
                )
                .map_err(ModelError::Likelihood)
            }
            ModelSpec::Ctm {
                error,
                basis,
                response,
            } => {
                let cs = constraints_for(basis);
                TransformationModel::new(*error, basis.clone(), cs, *response)
                    .map_err(ModelError::Likelihood)
            }
        }
    }

    /// Number of shift (plain covariate) coefficients.
    pub fn shift_columns(&self) -> usize {
        match self {
            ModelSpec::NormalLinear { shift }
            | ModelSpec::LognormalAft { shift }
            | ModelSpec::LoglogisticAft { shift }
            | ModelSpec::WeibullAft { shift }
            | ModelSpec::ExponentialAft { shift }
            | ModelSpec::CoxPh { shift, .. }
            | ModelSpec::PropOdds { shift, .. }
            | ModelSpec::AdditiveHazards { shift, .. }
            | ModelSpec::DiscreteOdds { shift, .. }
            | ModelSpec::DiscreteHazards { shift, .. }
            | ModelSpec::BinaryGlm { shift, .. }
            | ModelSpec::CountShift { shift, .. }
            | ModelSpec::CountHurdle { shift, .. } => *shift,
            _ => 0,
        }
    }
}

/// `(response-basis, x)` concatenation with the default monotonicity
/// constraints.
fn shifted(
    error: ErrorDist,
    response_basis: BasisSpec,
    shift: usize,
    kind: ResponseKind,
) -> Result<TransformationModel, ModelError> {
    let basis = if shift == 0 {
        response_basis
    } else {
        BasisSpec::concat(vec![
            response_basis,
            BasisSpec::Covariates {
                columns: shift,
                intercept: false,
            },
        ])?
    };
    let cs = constraints_for(&basis);
    TransformationModel::new(error, basis, cs, kind).map_err(ModelError::Likelihood)
}

/// Bernstein floor basis over the integer lattice `0..=max`.
fn count_basis(order: usize, max: usize) -> BasisSpec {
    BasisSpec::Bernstein {
        order,
        support: Support::new(-0.5, max as f64 + 0.5).expect("valid count support"),
    }
}

/// `bern_M(y) kron (1, x)` with constraints `D theta_int >= eps` and
/// `D (theta_int + theta_j) >= eps` per varying column, valid for
/// indicator-coded covariates.
fn varying_model(
    error: ErrorDist,
    order: usize,
    support: Support,
    varying: usize,
) -> Result<TransformationModel, ModelError> {
    let basis = BasisSpec::kronecker(
        BasisSpec::Bernstein { order, support },
        BasisSpec::Covariates {
            columns: varying,
            intercept: true,
        },
    )?;
    let p = order + 1;
    let q = varying + 1;
    let dim = p * q;
    let d = first_differences(p);
    let mut rows = Vec::new();
    for j in 0..q {
        for r in 0..d.nrows() {
            let mut row = DVector::zeros(dim);
            for c in 0..p {
                let v = d[(r, c)];
                if v != 0.0 {
                    row[c * q] += v;
                    if j > 0 {
                        row[c * q + j] += v;
                    }
                }
            }
            rows.push(row);
        }
    }
    let a = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
    // ramping every column satisfies both the intercept rows and the sums
    let mut dir = DVector::zeros(dim);
    for c in 0..p {
        dir[c * q] = c as f64;
    }
    let cs = ConstraintSystem::new(a, Some(dir));
    TransformationModel::new(error, basis, cs, ResponseKind::Continuous)
        .map_err(ModelError::Likelihood)
}

/// Monotonicity plus positivity of the transformation at the lower
/// support boundary (the cumulative hazard must be nonnegative).
fn additive_hazard_constraints(order: usize, dim: usize) -> ConstraintSystem {
    let p = order + 1;
    let d = first_differences(p);
    let mut a = DMatrix::zeros(p, dim);
    a.view_mut((0, 0), (p - 1, p)).copy_from(&d);
    a[(p - 1, 0)] = 1.0;
    let mut dir = DVector::zeros(dim);
    for c in 0..p {
        dir[c] = (c + 1) as f64;
    }
    ConstraintSystem::new(a, Some(dir))
}

/// Strictly feasible starting value: the response block reproduces the
/// linear map through `(q25, z25)` and `(q75, z75)` where `q` are data
/// quantiles and `z = F_Z^{-1}(0.25), F_Z^{-1}(0.75)`; shift blocks are
/// zero.
pub fn feasible_init(
    model: &TransformationModel,
    data: &Dataset,
) -> Result<DVector<f64>, ModelError> {
    let mut theta = DVector::zeros(model.dim());
    init_block(&model.basis, model.error, model.response, data, 0, &mut theta)?;
    optim::feasible_init(&theta, &model.constraints, 1e-4).map_err(ModelError::Optim)
}

fn quantile_pair(values: &mut Vec<f64>) -> Result<(f64, f64), ModelError> {
    if values.is_empty() {
        return Err(ModelError::DegenerateResponse);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| values[((values.len() - 1) as f64 * p).round() as usize];
    let (q25, q75) = (q(0.25), q(0.75));
    if q75 > q25 {
        Ok((q25, q75))
    } else {
        let (lo, hi) = (values[0], values[values.len() - 1]);
        if hi > lo {
            Ok((lo, hi))
        } else {
            Err(ModelError::DegenerateResponse)
        }
    }
}

fn linear_map(
    error: ErrorDist,
    data: &Dataset,
    log_scale: bool,
) -> Result<(f64, f64), ModelError> {
    let mut vals: Vec<f64> = data
        .response_values()
        .into_iter()
        .filter(|v| !log_scale || *v > 0.0)
        .map(|v| if log_scale { v.ln() } else { v })
        .collect();
    let (q25, q75) = quantile_pair(&mut vals)?;
    let z25 = error.quantile(0.25)?;
    let z75 = error.quantile(0.75)?;
    let slope = (z75 - z25) / (q75 - q25);
    let intercept = z25 - slope * q25;
    Ok((intercept, slope))
}

fn init_block(
    spec: &BasisSpec,
    error: ErrorDist,
    kind: ResponseKind,
    data: &Dataset,
    offset: usize,
    theta: &mut DVector<f64>,
) -> Result<(), ModelError> {
    match spec {
        BasisSpec::Bernstein { order, support } => {
            let (c, s) = linear_map(error, data, false)?;
            let m = *order;
            for j in 0..=m {
                let y = support.lower + support.width() * j as f64 / m.max(1) as f64;
                theta[offset + j] = c + s * y;
            }
        }
        BasisSpec::Discrete { levels } => {
            let k = *levels;
            for j in 1..k {
                theta[offset + j - 1] = error.quantile(j as f64 / k as f64)?;
            }
        }
        BasisSpec::Linear => {
            let (c, s) = linear_map(error, data, false)?;
            theta[offset] = c;
            theta[offset + 1] = s;
        }
        BasisSpec::LogLinear => {
            let (c, s) = linear_map(error, data, true)?;
            theta[offset] = c;
            theta[offset + 1] = s;
        }
        BasisSpec::Covariates { .. }
        | BasisSpec::CovariateBernstein { .. }
        | BasisSpec::ZeroIndicator
        | BasisSpec::ZeroCovariates { .. } => {}
        BasisSpec::Concat { parts } => {
            let mut off = offset;
            for p in parts {
                init_block(p, error, kind, data, off, theta)?;
                off += p.dim();
            }
        }
        BasisSpec::Kronecker { left, right } => {
            // fill the left block, then spread it over the right columns:
            // intercept-like columns get the value, pure covariate
            // columns stay zero; a covariate Bernstein right factor is a
            // partition of unity, so every column gets the value
            let pl = left.dim();
            let q = right.dim();
            let mut sub = DVector::zeros(pl);
            init_block(left, error, kind, data, 0, &mut sub)?;
            let cols: Vec<usize> = match right.as_ref() {
                BasisSpec::Covariates {
                    intercept: true, ..
                } => vec![0],
                BasisSpec::CovariateBernstein { .. } => (0..q).collect(),
                _ => vec![],
            };
            for p in 0..pl {
                for &col in &cols {
                    theta[offset + p * q + col] = sub[p];
                }
            }
        }
    }
    Ok(())
}

/// A fitted model with its inference ingredients.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub model: TransformationModel,
    pub theta: DVector<f64>,
    pub loglik: f64,
    /// Summed observed Fisher information at the optimum.
    pub fisher: DMatrix<f64>,
    /// Inverse (or pseudo-inverse) of the summed Fisher information.
    pub covariance: Option<DMatrix<f64>>,
    /// Rank used by the pseudo-inverse; equals the dimension when the
    /// Fisher matrix is well conditioned.
    pub covariance_rank: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub active_constraints: Vec<usize>,
    pub n: usize,
}

impl FitResult {
    /// `beta = -theta_shift` for families with a trailing shift block.
    pub fn shift_coefficients(&self) -> Vec<f64> {
        let q = self.spec.shift_columns();
        let d = self.theta.len();
        (d - q..d).map(|i| -self.theta[i]).collect()
    }

    pub fn shift_standard_errors(&self) -> Option<Vec<f64>> {
        let cov = self.covariance.as_ref()?;
        let q = self.spec.shift_columns();
        let d = self.theta.len();
        Some((d - q..d).map(|i| cov[(i, i)].sqrt()).collect())
    }
}

const COND_LIMIT: f64 = 1e12;

/// Invert the Fisher information, falling back to a rank-revealing
/// pseudo-inverse when the condition number exceeds `1e12`.
pub fn invert_fisher(fisher: &DMatrix<f64>) -> (Option<DMatrix<f64>>, usize) {
    let d = fisher.nrows();
    if d == 0 {
        return (Some(DMatrix::zeros(0, 0)), 0);
    }
    let svd = fisher.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || !smax.is_finite() {
        return (None, 0);
    }
    let cut = smax / COND_LIMIT;
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    match svd.pseudo_inverse(cut) {
        Ok(inv) => (Some(inv), rank),
        Err(_) => (None, 0),
    }
}

/// Fit a model spec to data: resolve supports, build, find a feasible
/// start, maximize the likelihood, and assemble the covariance.
pub fn fit(
    spec: &ModelSpec,
    data: &Dataset,
    config: &OptimizerConfig,
) -> Result<FitResult, ModelError> {
    let spec = spec.resolve(data)?;
    let model = spec.build()?;
    let expected = model.basis.covariate_columns();
    let got = if data.n() > 0 { data.x(0).len() } else { expected };
    if got < expected {
        return Err(ModelError::CovariateColumns { expected, got });
    }
    let start = feasible_init(&model, data)?;
    let f = |th: &DVector<f64>| total_loglik(&model, th, data).unwrap_or(f64::NEG_INFINITY);
    let g = |th: &DVector<f64>| {
        total_score(&model, th, data)
            .unwrap_or_else(|_| DVector::from_element(model.dim(), f64::NAN))
    };
    let result = optim::maximize(f, g, &model.constraints, &start, config)?;
    let fisher = total_fisher(&model, &result.theta, data)?;
    let (covariance, covariance_rank) = invert_fisher(&fisher);
    Ok(FitResult {
        spec,
        model,
        theta: result.theta,
        loglik: result.objective,
        fisher,
        covariance,
        covariance_rank,
        converged: result.converged,
        kkt_residual: result.kkt_residual,
        active_constraints: result.active,
        n: data.n(),
    })
}

/// Serialized form of a fit for reload-and-predict workflows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub version: u32,
    pub spec: ModelSpec,
    pub n: usize,
    pub loglik: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    pub theta: Vec<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub covariance_rank: usize,
    pub active_constraints: Vec<usize>,
}

impl FitArtifact {
    pub fn from_fit(fit: &FitResult) -> Self {
        FitArtifact {
            version: 1,
            spec: fit.spec.clone(),
            n: fit.n,
            loglik: fit.loglik,
            converged: fit.converged,
            kkt_residual: fit.kkt_residual,
            theta: fit.theta.iter().copied().collect(),
            covariance: fit.covariance.as_ref().map(|c| {
                (0..c.nrows())
                    .map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect())
                    .collect()
            }),
            covariance_rank: fit.covariance_rank,
            active_constraints: fit.active_constraints.clone(),
        }
    }

    /// Rebuild a usable [`FitResult`] (the Fisher matrix is restored
    /// from the stored covariance where available).
    pub fn into_fit(self) -> Result<FitResult, ModelError> {
        let model = self.spec.build()?;
        let d = self.theta.len();
        let theta = DVector::from_vec(self.theta);
        let covariance = self.covariance.map(|rows| {
            DMatrix::from_fn(d, d, |i, j| rows[i][j])
        });
        let fisher = covariance
            .as_ref()
            .and_then(|c| invert_fisher(c).0)
            .unwrap_or_else(|| DMatrix::zeros(d, d));
        Ok(FitResult {
            spec: self.spec,
            model,
            theta,
            loglik: self.loglik,
            fisher,
            covariance,
            covariance_rank: self.covariance_rank,
            converged: self.converged,
            kkt_residual: self.kkt_residual,
            active_constraints: self.active_constraints,
            n: self.n,
        })
    }
}

/// Extended bound used when truncation or censoring reaches the
/// response boundary (re-exported convenience for model code).
pub fn bound_value(b: Bound) -> f64 {
    b.as_f64()
}
