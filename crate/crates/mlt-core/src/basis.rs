//! Basis functions for transformation models: Bernstein polynomials,
//! discrete unit vectors, linear bases, covariate rows and their
//! concatenations and Kronecker products, together with the linear
//! constraint systems that make the fitted transformation monotone.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the dimension of composed bases.
pub const MAX_BASIS_DIM: usize = 10_000;

#[derive(Error, Debug)]
pub enum BasisError {
    #[error("support must satisfy lower < upper, got [{0}, {1}]")]
    InvalidSupport(f64, f64),
    #[error("value {value} outside support [{lower}, {upper}]")]
    OutOfSupport { value: f64, lower: f64, upper: f64 },
    #[error("level index {0} out of range 1..={1}")]
    LevelOutOfRange(usize, usize),
    #[error("discrete basis needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("log-linear basis requires y > 0, got {0}")]
    NonPositive(f64),
    #[error("covariate row has length {got}, basis expects {expected}")]
    CovariateLength { got: usize, expected: usize },
    #[error("composed basis dimension {0} exceeds cap {1}")]
    DimensionCap(usize, usize),
    #[error("concat needs at least one part")]
    EmptyConcat,
    #[error("kronecker right factor may not depend on the response")]
    KroneckerRightResponse,
    #[error("basis value at non-integer level {0}")]
    NonIntegerLevel(f64),
}

/// Response support `[lower, upper]`; Bernstein bases are rescaled to
/// `[0, 1]` over this interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lower: f64,
    pub upper: f64,
}

impl Support {
    pub fn new(lower: f64, upper: f64) -> Result<Self, BasisError> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(BasisError::InvalidSupport(lower, upper));
        }
        Ok(Support { lower, upper })
    }

    /// Default support for observed data: the data range padded by a
    /// fraction of its width on both sides.
    pub fn from_data(values: impl IntoIterator<Item = f64>) -> Result<Self, BasisError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(lo < hi) {
            return Err(BasisError::InvalidSupport(lo, hi));
        }
        let delta = 1e-3 * (hi - lo);
        Support::new(lo - delta, hi + delta)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn rescale(&self, y: f64) -> f64 {
        (y - self.lower) / self.width()
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }
}

/// A basis function `c(y, x)` mapping a response value and a covariate
/// row to a vector of regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    /// Bernstein polynomial basis of the given order on a finite support;
    /// dimension `order + 1`.
    Bernstein { order: usize, support: Support },
    /// Unit-vector basis for an ordered response with `levels` categories;
    /// dimension `levels - 1` (the top category maps to +infinity).
    Discrete { levels: usize },
    /// `(1, y)`.
    Linear,
    /// `(1, log y)` for positive responses.
    LogLinear,
    /// Covariate row, optionally with a leading intercept.
    Covariates { columns: usize, intercept: bool },
    /// Bernstein polynomial basis in covariate column `column`
    /// (smooth covariate effects, distribution regression).
    CovariateBernstein {
        order: usize,
        support: Support,
        column: usize,
    },
    /// `1(y = 0)` on a count lattice (hurdle intercept block).
    ZeroIndicator,
    /// `1(y = 0) * x` (hurdle covariate block).
    ZeroCovariates { columns: usize },
    Concat { parts: Vec<BasisSpec> },
    Kronecker { left: Box<BasisSpec>, right: Box<BasisSpec> },
}

impl BasisSpec {
    pub fn concat(parts: Vec<BasisSpec>) -> Result<BasisSpec, BasisError> {
        if parts.is_empty() {
            return Err(BasisError::EmptyConcat);
        }
        let spec = BasisSpec::Concat { parts };
        spec.check_dim()?;
        Ok(spec)
    }

    pub fn kronecker(left: BasisSpec, right: BasisSpec) -> Result<BasisSpec, BasisError> {
        if right.depends_on_response() {
            return Err(BasisError::KroneckerRightResponse);
        }
        let spec = BasisSpec::Kronecker {
            left: Box::new(left),
            right: Box::new(right),
        };
        spec.check_dim()?;
        Ok(spec)
    }

    fn check_dim(&self) -> Result<usize, BasisError> {
        let d = self.dim();
        if d > MAX_BASIS_DIM {
            return Err(BasisError::DimensionCap(d, MAX_BASIS_DIM));
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            BasisSpec::Bernstein { order, .. }
            | BasisSpec::CovariateBernstein { order, .. } => order + 1,
            BasisSpec::Discrete { levels } => levels.saturating_sub(1),
            BasisSpec::Linear | BasisSpec::LogLinear => 2,
            BasisSpec::Covariates { columns, intercept } => columns + usize::from(*intercept),
            BasisSpec::ZeroIndicator => 1,
            BasisSpec::ZeroCovariates { columns } => *columns,
            BasisSpec::Concat { parts } => parts.iter().map(BasisSpec::dim).sum(),
            BasisSpec::Kronecker { left, right } => left.dim() * right.dim(),
        }
    }

    pub fn depends_on_response(&self) -> bool {
        match self {
            BasisSpec::Bernstein { .. }
            | BasisSpec::Discrete { .. }
            | BasisSpec::Linear
            | BasisSpec::LogLinear
            | BasisSpec::ZeroIndicator
            | BasisSpec::ZeroCovariates { .. } => true,
            BasisSpec::Covariates { .. } | BasisSpec::CovariateBernstein { .. } => false,
            BasisSpec::Concat { parts } => parts.iter().any(BasisSpec::depends_on_response),
            BasisSpec::Kronecker { left, right } => {
                left.depends_on_response() || right.depends_on_response()
            }
        }
    }

    /// Number of covariate columns consumed by the basis (the expected
    /// length of `x` rows).
    pub fn covariate_columns(&self) -> usize {
        match self {
            BasisSpec::Covariates { columns, .. } | BasisSpec::ZeroCovariates { columns } => {
                *columns
            }
            BasisSpec::CovariateBernstein { column, .. } => column + 1,
            BasisSpec::Concat { parts } => parts
                .iter()
                .map(BasisSpec::covariate_columns)
                .max()
                .unwrap_or(0),
            BasisSpec::Kronecker { left, right } => {
                left.covariate_columns().max(right.covariate_columns())
            }
            _ => 0,
        }
    }

    /// Evaluate `c(y, x)` into `out`. With `clamp`, Bernstein arguments
    /// outside the support are clamped to the boundary; otherwise they
    /// are a domain error.
    pub fn eval_into(
        &self,
        y: f64,
        x: &[f64],
        clamp: bool,
        out: &mut [f64],
    ) -> Result<(), BasisError> {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            BasisSpec::Bernstein { order, support } => {
                let u = rescaled(y, support, clamp)?;
                bernstein_values(*order, u, out);
                Ok(())
            }
            BasisSpec::Discrete { levels } => {
                let k = integer_level(y)?;
                if k < 1 || k >= *levels as i64 {
                    return Err(BasisError::LevelOutOfRange(k.max(0) as usize, *levels));
                }
                out.fill(0.0);
                out[(k - 1) as usize] = 1.0;
                Ok(())
            }
            BasisSpec::Linear => {
                out[0] = 1.0;
                out[1] = y;
                Ok(())
            }
            BasisSpec::LogLinear => {
                if y <= 0.0 {
                    return Err(BasisError::NonPositive(y));
                }
                out[0] = 1.0;
                out[1] = y.ln();
                Ok(())
            }
            BasisSpec::Covariates { columns, intercept } => {
                check_x(x, *columns)?;
                let mut i = 0;
                if *intercept {
                    out[0] = 1.0;
                    i = 1;
                }
                out[i..].copy_from_slice(&x[..*columns]);
                Ok(())
            }
            BasisSpec::CovariateBernstein {
                order,
                support,
                column,
            } => {
                check_x(x, column + 1)?;
                let u = rescaled(x[*column], support, clamp)?;
                bernstein_values(*order, u, out);
                Ok(())
            }
            BasisSpec::ZeroIndicator => {
                out[0] = if y.abs() < 0.5 { 1.0 } else { 0.0 };
                Ok(())
            }
            BasisSpec::ZeroCovariates { columns } => {
                check_x(x, *columns)?;
                let ind = if y.abs() < 0.5 { 1.0 } else { 0.0 };
                for (o, xi) in out.iter_mut().zip(&x[..*columns]) {
                    *o = ind * xi;
                }
                Ok(())
            }
            BasisSpec::Concat { parts } => {
                let mut off = 0;
                for p in parts {
                    let d = p.dim();
                    p.eval_into(y, x, clamp, &mut out[off..off + d])?;
                    off += d;
                }
                Ok(())
            }
            BasisSpec::Kronecker { left, right } => {
                let (pl, pr) = (left.dim(), right.dim());
                let mut a = vec![0.0; pl];
                let mut b = vec![0.0; pr];
                left.eval_into(y, x, clamp, &mut a)?;
                right.eval_into(y, x, clamp, &mut b)?;
                // response index varies slowest: out[p*Q + q] = a[p] * b[q]
                for p in 0..pl {
                    for q in 0..pr {
                        out[p * pr + q] = a[p] * b[q];
                    }
                }
                Ok(())
            }
        }
    }

    /// Derivative of `c(y, x)` with respect to `y`.
    pub fn deriv_into(
        &self,
        y: f64,
        x: &[f64],
        clamp: bool,
        out: &mut [f64],
    ) -> Result<(), BasisError> {
        debug_assert_eq!(out.len(), self.dim());
        match self {
            BasisSpec::Bernstein { order, support } => {
                let u = rescaled(y, support, clamp)?;
                bernstein_deriv_values(*order, u, support.width(), out);
                Ok(())
            }
            BasisSpec::Linear => {
                out[0] = 0.0;
                out[1] = 1.0;
                Ok(())
            }
            BasisSpec::LogLinear => {
                if y <= 0.0 {
                    return Err(BasisError::NonPositive(y));
                }
                out[0] = 0.0;
                out[1] = 1.0 / y;
                Ok(())
            }
            BasisSpec::Discrete { .. }
            | BasisSpec::Covariates { .. }
            | BasisSpec::CovariateBernstein { .. }
            | BasisSpec::ZeroIndicator
            | BasisSpec::ZeroCovariates { .. } => {
                out.fill(0.0);
                Ok(())
            }
            BasisSpec::Concat { parts } => {
                let mut off = 0;
                for p in parts {
                    let d = p.dim();
                    p.deriv_into(y, x, clamp, &mut out[off..off + d])?;
                    off += d;
                }
                Ok(())
            }
            BasisSpec::Kronecker { left, right } => {
                let (pl, pr) = (left.dim(), right.dim());
                let mut da = vec![0.0; pl];
                let mut b = vec![0.0; pr];
                left.deriv_into(y, x, clamp, &mut da)?;
                right.eval_into(y, x, clamp, &mut b)?;
                for p in 0..pl {
                    for q in 0..pr {
                        out[p * pr + q] = da[p] * b[q];
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, y: f64, x: &[f64], clamp: bool) -> Result<DVector<f64>, BasisError> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(y, x, clamp, out.as_mut_slice())?;
        Ok(out)
    }

    pub fn deriv(&self, y: f64, x: &[f64], clamp: bool) -> Result<DVector<f64>, BasisError> {
        let mut out = DVector::zeros(self.dim());
        self.deriv_into(y, x, clamp, out.as_mut_slice())?;
        Ok(out)
    }
}

fn rescaled(y: f64, support: &Support, clamp: bool) -> Result<f64, BasisError> {
    let u = support.rescale(y);
    if (0.0..=1.0).contains(&u) {
        Ok(u)
    } else if clamp {
        Ok(u.clamp(0.0, 1.0))
    } else {
        Err(BasisError::OutOfSupport {
            value: y,
            lower: support.lower,
            upper: support.upper,
        })
    }
}

fn integer_level(y: f64) -> Result<i64, BasisError> {
    let k = y.round();
    if (y - k).abs() > 1e-8 {
        return Err(BasisError::NonIntegerLevel(y));
    }
    Ok(k as i64)
}

fn check_x(x: &[f64], columns: usize) -> Result<(), BasisError> {
    if x.len() < columns {
        return Err(BasisError::CovariateLength {
            got: x.len(),
            expected: columns,
        });
    }
    Ok(())
}

/// All Bernstein polynomials `C(m, M) u^m (1-u)^(M-m)` for `m = 0..=M`.
fn bernstein_values(order: usize, u: f64, out: &mut [f64]) {
    let m = order;
    let v = 1.0 - u;
    // prefix powers keep the computation stable near the boundaries
    let mut upow = 1.0;
    let mut binom = 1.0f64;
    for j in 0..=m {
        out[j] = binom * upow;
        upow *= u;
        binom *= (m - j) as f64 / (j + 1) as f64;
    }
    let mut vpow = 1.0;
    for j in (0..=m).rev() {
        out[j] *= vpow;
        vpow *= v;
    }
}

/// Coefficient vector of the derivative: `d^T theta` is the exact
/// derivative of `bern_M(y)^T theta`.
fn bernstein_deriv_values(order: usize, u: f64, width: f64, out: &mut [f64]) {
    let m = order;
    if m == 0 {
        out[0] = 0.0;
        return;
    }
    let mut lower = vec![0.0; m]; // order M-1 polynomials
    bernstein_values(m - 1, u, &mut lower);
    let scale = m as f64 / width;
    for j in 0..=m {
        let a = if j > 0 { lower[j - 1] } else { 0.0 };
        let b = if j < m { lower[j] } else { 0.0 };
        out[j] = scale * (a - b);
    }
}

/// Evaluation of the standalone discrete basis; the top level carries the
/// whole upper tail.
pub enum DiscreteEval {
    Row(DVector<f64>),
    PlusInfinity,
}

/// `e_{K-1}(k)` for `k < K`, the +infinity sentinel for `k = K`.
pub fn discrete_eval(k: usize, levels: usize) -> Result<DiscreteEval, BasisError> {
    if levels < 2 {
        return Err(BasisError::TooFewLevels(levels));
    }
    if k < 1 || k > levels {
        return Err(BasisError::LevelOutOfRange(k, levels));
    }
    if k == levels {
        return Ok(DiscreteEval::PlusInfinity);
    }
    let mut v = DVector::zeros(levels - 1);
    v[k - 1] = 1.0;
    Ok(DiscreteEval::Row(v))
}

/// Default strictness margin turning open constraints `A theta > 0` into
/// the closed feasible set `A theta >= eps`.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Linear inequality constraints `A theta >= eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub a: DMatrix<f64>,
    pub eps: f64,
    /// A direction `d` with `A d >= 1` componentwise, used to construct
    /// strictly feasible starting values. Empty systems have none.
    pub feasible_dir: Option<DVector<f64>>,
}

impl ConstraintSystem {
    pub fn empty(dim: usize) -> Self {
        ConstraintSystem {
            a: DMatrix::zeros(0, dim),
            eps: DEFAULT_EPS,
            feasible_dir: None,
        }
    }

    pub fn new(a: DMatrix<f64>, feasible_dir: Option<DVector<f64>>) -> Self {
        ConstraintSystem {
            a,
            eps: DEFAULT_EPS,
            feasible_dir,
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Slack `A theta - eps` per row.
    pub fn slack(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut s = &self.a * theta;
        s.add_scalar_mut(-self.eps);
        s
    }

    pub fn is_feasible(&self, theta: &DVector<f64>) -> bool {
        self.slack(theta).iter().all(|&s| s >= -1e-12)
    }

    pub fn max_violation(&self, theta: &DVector<f64>) -> f64 {
        self.slack(theta)
            .iter()
            .fold(0.0f64, |acc, &s| acc.max(-s))
    }

    /// Stack two systems over the same parameter vector.
    pub fn stacked(&self, other: &ConstraintSystem) -> ConstraintSystem {
        assert_eq!(self.dim(), other.dim());
        let mut a = DMatrix::zeros(self.a.nrows() + other.a.nrows(), self.dim());
        a.rows_mut(0, self.a.nrows()).copy_from(&self.a);
        a.rows_mut(self.a.nrows(), other.a.nrows())
            .copy_from(&other.a);
        let dir = match (&self.feasible_dir, &other.feasible_dir) {
            (Some(d), None) | (None, Some(d)) => Some(d.clone()),
            (Some(d1), Some(d2)) => Some(d1 + d2),
            (None, None) => None,
        };
        ConstraintSystem::new(a, dir)
    }
}

/// First-difference matrix with `p - 1` rows over `p` coefficients.
pub fn first_differences(p: usize) -> DMatrix<f64> {
    let rows = p.saturating_sub(1);
    let mut d = DMatrix::zeros(rows, p);
    for i in 0..rows {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

/// Monotonicity constraints for a basis: first differences on response
/// blocks, replicated over covariate columns for Kronecker terms, with
/// unconstrained shift blocks.
pub fn constraints_for(spec: &BasisSpec) -> ConstraintSystem {
    let dim = spec.dim();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut dir = DVector::zeros(dim);
    collect_constraints(spec, 0, &mut rows, &mut dir);
    if rows.is_empty() {
        return ConstraintSystem::empty(dim);
    }
    let a = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
    ConstraintSystem::new(a, Some(dir))
}

fn collect_constraints(
    spec: &BasisSpec,
    offset: usize,
    rows: &mut Vec<DVector<f64>>,
    dir: &mut DVector<f64>,
) {
    let dim = dir.len();
    match spec {
        BasisSpec::Bernstein { order, .. } => {
            diff_rows(offset, order + 1, 1, 0, dim, rows, dir);
        }
        BasisSpec::Discrete { levels } => {
            diff_rows(offset, levels - 1, 1, 0, dim, rows, dir);
        }
        BasisSpec::Linear | BasisSpec::LogLinear => {
            let mut row = DVector::zeros(dim);
            row[offset + 1] = 1.0;
            rows.push(row);
            dir[offset + 1] += 1.0;
        }
        BasisSpec::Covariates { .. }
        | BasisSpec::CovariateBernstein { .. }
        | BasisSpec::ZeroIndicator
        | BasisSpec::ZeroCovariates { .. } => {}
        BasisSpec::Concat { parts } => {
            let mut off = offset;
            for p in parts {
                collect_constraints(p, off, rows, dir);
                off += p.dim();
            }
        }
        BasisSpec::Kronecker { left, right } => {
            // replicate the left factor's constraints in every covariate column
            let q = right.dim();
            let sub = constraints_for(left);
            for i in 0..sub.a.nrows() {
                for col in 0..q {
                    let mut row = DVector::zeros(dim);
                    for p in 0..left.dim() {
                        let v = sub.a[(i, p)];
                        if v != 0.0 {
                            row[offset + p * q + col] = v;
                        }
                    }
                    rows.push(row);
                }
            }
            if let Some(sub_dir) = sub.feasible_dir {
                for p in 0..left.dim() {
                    for col in 0..q {
                        dir[offset + p * q + col] += sub_dir[p];
                    }
                }
            }
        }
    }
}

fn diff_rows(
    offset: usize,
    p: usize,
    stride: usize,
    col: usize,
    dim: usize,
    rows: &mut Vec<DVector<f64>>,
    dir: &mut DVector<f64>,
) {
    for i in 0..p.saturating_sub(1) {
        let mut row = DVector::zeros(dim);
        row[offset + i * stride + col] = -1.0;
        row[offset + (i + 1) * stride + col] = 1.0;
        rows.push(row);
    }
    for i in 0..p {
        dir[offset + i * stride + col] += i as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn support() -> Support {
        Support::new(1.0, 5.0).unwrap()
    }

    #[test]
    fn bernstein_boundary_is_first_unit_vector() {
        for m in 1..8 {
            let spec = BasisSpec::Bernstein {
                order: m,
                support: support(),
            };
            let v = spec.eval(1.0, &[], false).unwrap();
            assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-14);
            for j in 1..=m {
                assert_abs_diff_eq!(v[j], 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn bernstein_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in 1..=20 {
            let spec = BasisSpec::Bernstein {
                order: m,
                support: support(),
            };
            for _ in 0..20 {
                let y = 1.0 + 4.0 * rng.gen::<f64>();
                let v = spec.eval(y, &[], false).unwrap();
                assert_abs_diff_eq!(v.sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bernstein_reproduces_linear_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in 1..=20 {
            let spec = BasisSpec::Bernstein {
                order: m,
                support: support(),
            };
            let theta = DVector::from_fn(m + 1, |i, _| i as f64 / m as f64);
            for _ in 0..10 {
                let y = 1.0 + 4.0 * rng.gen::<f64>();
                let v = spec.eval(y, &[], false).unwrap();
                let u = support().rescale(y);
                assert_abs_diff_eq!(v.dot(&theta), u, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bernstein_dimension_matches_old_faithful_model() {
        // waiting-time density model with order 8 has 9 parameters
        let spec = BasisSpec::Bernstein {
            order: 8,
            support: Support::new(43.0, 96.0).unwrap(),
        };
        assert_eq!(spec.dim(), 9);
    }

    #[test]
    fn bernstein_deriv_of_constant_is_zero() {
        let spec = BasisSpec::Bernstein {
            order: 6,
            support: support(),
        };
        let theta = DVector::from_element(7, 3.5);
        for y in [1.0, 2.3, 4.9] {
            let d = spec.deriv(y, &[], false).unwrap();
            assert_abs_diff_eq!(d.dot(&theta), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bernstein_deriv_of_linear_ramp() {
        let m = 9;
        let spec = BasisSpec::Bernstein {
            order: m,
            support: support(),
        };
        let theta = DVector::from_fn(m + 1, |i, _| i as f64 / m as f64);
        for y in [1.2, 3.0, 4.7] {
            let d = spec.deriv(y, &[], false).unwrap();
            assert_abs_diff_eq!(d.dot(&theta), 1.0 / support().width(), epsilon = 1e-12);
        }
    }

    #[test]
    fn bernstein_deriv_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sup = support();
        for _ in 0..100 {
            let m = rng.gen_range(1..=12);
            let spec = BasisSpec::Bernstein {
                order: m,
                support: sup,
            };
            let theta = DVector::from_fn(m + 1, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let y = sup.lower + sup.width() * (0.05 + 0.9 * rng.gen::<f64>());
            let h = 1e-6 * sup.width();
            let fp = spec.eval(y + h, &[], false).unwrap().dot(&theta);
            let fm = spec.eval(y - h, &[], false).unwrap().dot(&theta);
            let fd = (fp - fm) / (2.0 * h);
            let an = spec.deriv(y, &[], false).unwrap().dot(&theta);
            assert!(
                (an - fd).abs() <= 1e-6 * (1.0 + an.abs()),
                "m={m} y={y} an={an} fd={fd}"
            );
        }
    }

    #[test]
    fn bernstein_order_zero_has_zero_derivative() {
        let spec = BasisSpec::Bernstein {
            order: 0,
            support: support(),
        };
        let d = spec.deriv(2.0, &[], false).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn out_of_support_errors_without_clamping() {
        let spec = BasisSpec::Bernstein {
            order: 3,
            support: support(),
        };
        assert!(spec.eval(0.5, &[], false).is_err());
        let clamped = spec.eval(0.5, &[], true).unwrap();
        assert_abs_diff_eq!(clamped[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn monotone_coefficients_give_monotone_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = BasisSpec::Bernstein {
            order: 7,
            support: support(),
        };
        let cs = constraints_for(&spec);
        // strictly increasing coefficients satisfy the constraints
        let mut theta = DVector::zeros(8);
        let mut acc = -1.0;
        for i in 0..8 {
            acc += 0.1 + rng.gen::<f64>();
            theta[i] = acc;
        }
        assert!(cs.is_feasible(&theta));
        let mut ys: Vec<f64> = (0..50).map(|_| 1.0 + 4.0 * rng.gen::<f64>()).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let hs: Vec<f64> = ys
            .iter()
            .map(|&y| spec.eval(y, &[], false).unwrap().dot(&theta))
            .collect();
        for w in hs.windows(2) {
            assert!(w[0] < w[1] + 1e-12);
        }
    }

    #[test]
    fn discrete_eval_unit_vectors_and_sentinel() {
        match discrete_eval(1, 4).unwrap() {
            DiscreteEval::Row(v) => {
                assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0]);
            }
            _ => panic!("expected a row"),
        }
        assert!(matches!(
            discrete_eval(4, 4).unwrap(),
            DiscreteEval::PlusInfinity
        ));
        assert!(discrete_eval(5, 4).is_err());
        // binary case: one-dimensional intercept basis
        match discrete_eval(1, 2).unwrap() {
            DiscreteEval::Row(v) => assert_eq!(v.len(), 1),
            _ => panic!(),
        }
    }

    #[test]
    fn kronecker_matches_outer_product_flattening() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let left = BasisSpec::Bernstein {
            order: 4,
            support: support(),
        };
        let right = BasisSpec::Covariates {
            columns: 3,
            intercept: true,
        };
        let spec = BasisSpec::kronecker(left.clone(), right.clone()).unwrap();
        for _ in 0..20 {
            let y = 1.0 + 4.0 * rng.gen::<f64>();
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let a = left.eval(y, &x, false).unwrap();
            let b = right.eval(y, &x, false).unwrap();
            let c = spec.eval(y, &x, false).unwrap();
            for p in 0..a.len() {
                for q in 0..b.len() {
                    assert_abs_diff_eq!(c[p * b.len() + q], a[p] * b[q], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn kronecker_with_scalar_one_is_identity() {
        let left = BasisSpec::Bernstein {
            order: 3,
            support: support(),
        };
        let one = BasisSpec::Covariates {
            columns: 0,
            intercept: true,
        };
        let spec = BasisSpec::kronecker(left.clone(), one).unwrap();
        let v = spec.eval(2.0, &[], false).unwrap();
        let a = left.eval(2.0, &[], false).unwrap();
        assert_eq!(v, a);
    }

    #[test]
    fn kronecker_dimension_for_old_faithful_conditional_model() {
        let spec = BasisSpec::kronecker(
            BasisSpec::Bernstein {
                order: 7,
                support: support(),
            },
            BasisSpec::CovariateBernstein {
                order: 3,
                support: Support::new(43.0, 96.0).unwrap(),
                column: 0,
            },
        )
        .unwrap();
        assert_eq!(spec.dim(), 32);
    }

    #[test]
    fn concat_of_bernstein_and_covariates() {
        let spec = BasisSpec::concat(vec![
            BasisSpec::Bernstein {
                order: 5,
                support: support(),
            },
            BasisSpec::Covariates {
                columns: 2,
                intercept: false,
            },
        ])
        .unwrap();
        assert_eq!(spec.dim(), 8);
        let v = spec.eval(2.0, &[0.3, -1.2], false).unwrap();
        assert_abs_diff_eq!(v.rows(0, 6).sum(), 1.0, epsilon = 1e-12);
        assert_eq!(v[6], 0.3);
        assert_eq!(v[7], -1.2);
    }

    #[test]
    fn constraint_counts() {
        // Cox with M = 10: ten first-difference rows
        let cox = BasisSpec::concat(vec![
            BasisSpec::Bernstein {
                order: 10,
                support: support(),
            },
            BasisSpec::Covariates {
                columns: 1,
                intercept: false,
            },
        ])
        .unwrap();
        let cs = constraints_for(&cox);
        assert_eq!(cs.num_constraints(), 10);
        assert_eq!(cs.dim(), 12);

        // response Bernstein crossed with a covariate Bernstein: 3 x 4 rows
        let kron = BasisSpec::kronecker(
            BasisSpec::Bernstein {
                order: 3,
                support: support(),
            },
            BasisSpec::CovariateBernstein {
                order: 3,
                support: support(),
                column: 0,
            },
        )
        .unwrap();
        assert_eq!(constraints_for(&kron).num_constraints(), 12);

        // linear basis: single slope constraint
        let cs = constraints_for(&BasisSpec::Linear);
        assert_eq!(cs.num_constraints(), 1);
        assert_eq!(cs.a[(0, 1)], 1.0);

        // shift-only basis: empty but valid
        let cs = constraints_for(&BasisSpec::Covariates {
            columns: 3,
            intercept: true,
        });
        assert_eq!(cs.num_constraints(), 0);
    }

    #[test]
    fn feasible_dir_satisfies_constraints() {
        for spec in [
            BasisSpec::Bernstein {
                order: 6,
                support: support(),
            },
            BasisSpec::kronecker(
                BasisSpec::Bernstein {
                    order: 3,
                    support: support(),
                },
                BasisSpec::Covariates {
                    columns: 2,
                    intercept: true,
                },
            )
            .unwrap(),
            BasisSpec::concat(vec![
                BasisSpec::Discrete { levels: 5 },
                BasisSpec::Covariates {
                    columns: 1,
                    intercept: false,
                },
            ])
            .unwrap(),
        ] {
            let cs = constraints_for(&spec);
            let dir = cs.feasible_dir.clone().unwrap();
            let prod = &cs.a * &dir;
            for v in prod.iter() {
                assert!(*v >= 1.0 - 1e-12, "A*dir component {v}");
            }
        }
    }

    #[test]
    fn spec_serializes_round_trip() {
        let spec = BasisSpec::concat(vec![
            BasisSpec::Bernstein {
                order: 4,
                support: support(),
            },
            BasisSpec::Covariates {
                columns: 2,
                intercept: false,
            },
        ])
        .unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn support_from_data_pads_range() {
        let s = Support::from_data([2.0, 4.0, 3.0]).unwrap();
        assert!(s.lower < 2.0 && s.upper > 4.0);
        assert_abs_diff_eq!(s.lower, 2.0 - 2e-3, epsilon = 1e-12);
    }

    #[test]
    fn dimension_cap_enforced() {
        let big = BasisSpec::Bernstein {
            order: 200,
            support: support(),
        };
        let r = BasisSpec::kronecker(
            big.clone(),
            BasisSpec::Covariates {
                columns: 100,
                intercept: false,
            },
        );
        assert!(matches!(r, Err(BasisError::DimensionCap(_, _))));
    }
}
