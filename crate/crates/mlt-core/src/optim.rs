//! Constrained maximization of concave objectives by an augmented
//! Lagrangian outer loop around a BFGS inner solver.
//!
//! The feasible set is `A theta >= eps` from a [`ConstraintSystem`]. The
//! objective may return `-inf` anywhere, which the line search treats as
//! a rejected step, so infeasible likelihood evaluations never abort a
//! fit. The whole procedure is deterministic: identical inputs produce
//! bitwise identical iterates.

use crate::basis::ConstraintSystem;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum OptimError {
    #[error("no finite starting point found (objective is -inf at the initial value)")]
    NonFiniteStart,
    #[error("initial value infeasible and the constraint system has no repair direction")]
    NoFeasibleDirection,
    #[error("dimension mismatch: start has {0} entries, constraints expect {1}")]
    Dimension(usize, usize),
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Infinity-norm tolerance on the KKT stationarity residual.
    pub g_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_outer: 100,
            max_inner: 500,
            g_tol: 1e-8,
            initial_penalty: 1.0,
            penalty_growth: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `||grad f + A^T lambda||_inf` at the returned point.
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub multipliers: DVector<f64>,
    /// Indices of constraints with slack within `10 * eps` of the bound.
    pub active: Vec<usize>,
}

/// Move `theta` along the constraint system's repair direction until it
/// is strictly feasible with the given margin.
pub fn feasible_init(
    theta: &DVector<f64>,
    cs: &ConstraintSystem,
    margin: f64,
) -> Result<DVector<f64>, OptimError> {
    if theta.len() != cs.dim() {
        return Err(OptimError::Dimension(theta.len(), cs.dim()));
    }
    if cs.num_constraints() == 0 {
        return Ok(theta.clone());
    }
    let slack = cs.slack(theta);
    let worst = slack.min();
    if worst >= margin {
        return Ok(theta.clone());
    }
    let dir = cs
        .feasible_dir
        .as_ref()
        .ok_or(OptimError::NoFeasibleDirection)?;
    // A dir >= 1 componentwise, so stepping by the worst shortfall repairs
    // every row
    let t = margin - worst;
    Ok(theta + dir * t)
}

/// Maximize a concave objective subject to `A theta >= eps`.
///
/// `f` may return `-inf`; `grad` is only called where `f` is finite.
pub fn maximize<F, G>(
    f: F,
    grad: G,
    cs: &ConstraintSystem,
    start: &DVector<f64>,
    config: &OptimizerConfig,
) -> Result<OptimResult, OptimError>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let dim = start.len();
    if cs.dim() != dim {
        return Err(OptimError::Dimension(dim, cs.dim()));
    }
    let mut theta = feasible_init(start, cs, 10.0 * cs.eps)?;
    if !f(&theta).is_finite() {
        theta = recover_finite(&f, cs, &theta)?;
    }

    let m = cs.num_constraints();
    let mut lambda = DVector::zeros(m);
    let mut rho = config.initial_penalty;
    let mut prev_violation = f64::INFINITY;
    let mut inner_total = 0;
    let mut outer = 0;

    for _ in 0..config.max_outer {
        outer += 1;
        let phi = |th: &DVector<f64>| al_value(&f, cs, &lambda, rho, th);
        let dphi = |th: &DVector<f64>| al_grad(&grad, cs, &lambda, rho, th);
        let (next, iters) = bfgs_min(&phi, &dphi, &theta, config);
        inner_total += iters;
        theta = next;

        let slack = cs.slack(&theta);
        for i in 0..m {
            lambda[i] = (lambda[i] - rho * slack[i]).max(0.0);
        }
        let violation = slack.iter().fold(0.0f64, |a, &s| a.max(-s));
        let g = grad(&theta);
        let stat = kkt_stationarity(&g, cs, &lambda);
        if stat <= config.g_tol && violation <= 1e-10 {
            return Ok(finish(
                theta, &f, cs, lambda, stat, violation, outer, inner_total, true,
            ));
        }
        if violation > prev_violation / 4.0 && violation > 1e-12 {
            rho *= config.penalty_growth;
        }
        prev_violation = violation;
        if m == 0 {
            // unconstrained: the single inner solve decides
            let converged = stat <= config.g_tol;
            return Ok(finish(
                theta, &f, cs, lambda, stat, violation, outer, inner_total, converged,
            ));
        }
    }

    let g = grad(&theta);
    let stat = kkt_stationarity(&g, cs, &lambda);
    let violation = cs.max_violation(&theta);
    Ok(finish(
        theta, &f, cs, lambda, stat, violation, outer, inner_total, false,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish<F: Fn(&DVector<f64>) -> f64>(
    theta: DVector<f64>,
    f: &F,
    cs: &ConstraintSystem,
    lambda: DVector<f64>,
    kkt_residual: f64,
    max_violation: f64,
    outer: usize,
    inner: usize,
    converged: bool,
) -> OptimResult {
    let slack = cs.slack(&theta);
    let active = (0..cs.num_constraints())
        .filter(|&i| slack[i] <= 10.0 * cs.eps)
        .collect();
    OptimResult {
        objective: f(&theta),
        theta,
        converged,
        outer_iterations: outer,
        inner_iterations: inner,
        kkt_residual,
        max_violation,
        multipliers: lambda,
        active,
    }
}

/// `||grad f + A^T lambda||_inf`.
pub fn kkt_stationarity(
    grad_f: &DVector<f64>,
    cs: &ConstraintSystem,
    lambda: &DVector<f64>,
) -> f64 {
    if cs.num_constraints() == 0 {
        return grad_f.amax();
    }
    (grad_f + cs.a.transpose() * lambda).amax()
}

/// Augmented Lagrangian value for the minimization of `-f`.
fn al_value<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    cs: &ConstraintSystem,
    lambda: &DVector<f64>,
    rho: f64,
    theta: &DVector<f64>,
) -> f64 {
    let v = f(theta);
    if !v.is_finite() {
        return f64::INFINITY;
    }
    let mut pen = 0.0;
    let slack = cs.slack(theta);
    for i in 0..cs.num_constraints() {
        let mu = (lambda[i] - rho * slack[i]).max(0.0);
        pen += mu * mu - lambda[i] * lambda[i];
    }
    -v + pen / (2.0 * rho)
}

fn al_grad<G: Fn(&DVector<f64>) -> DVector<f64>>(
    grad: &G,
    cs: &ConstraintSystem,
    lambda: &DVector<f64>,
    rho: f64,
    theta: &DVector<f64>,
) -> DVector<f64> {
    let mut g = -grad(theta);
    if cs.num_constraints() > 0 {
        let slack = cs.slack(theta);
        for i in 0..cs.num_constraints() {
            let mu = (lambda[i] - rho * slack[i]).max(0.0);
            if mu > 0.0 {
                g -= cs.a.row(i).transpose() * mu;
            }
        }
    }
    g
}

/// Plain BFGS with backtracking Armijo line search; `+inf` objective
/// values reject the step.
fn bfgs_min<P, D>(
    phi: &P,
    dphi: &D,
    start: &DVector<f64>,
    config: &OptimizerConfig,
) -> (DVector<f64>, usize)
where
    P: Fn(&DVector<f64>) -> f64,
    D: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = start.len();
    let mut x = start.clone();
    let mut fx = phi(&x);
    let mut g = dphi(&x);
    let mut h = DMatrix::identity(n, n);
    let mut iters = 0;

    for _ in 0..config.max_inner {
        if g.amax() <= 0.5 * config.g_tol {
            break;
        }
        iters += 1;
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            // reset a corrupted approximation
            h = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = dir.dot(&g);
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut xn = x.clone();
        let mut fn_ = fx;
        for _ in 0..60 {
            xn = &x + &dir * step;
            fn_ = phi(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let gn = dphi(&xn);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // BFGS inverse update
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            let c1 = (sy + yhy) / (sy * sy);
            h += &s * s.transpose() * c1;
            let cross = &hy * s.transpose();
            let sym = &cross + cross.transpose();
            h -= sym / sy;
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    (x, iters)
}

/// Scan along the repair direction for a point with a finite objective.
fn recover_finite<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    cs: &ConstraintSystem,
    theta: &DVector<f64>,
) -> Result<DVector<f64>, OptimError> {
    if let Some(dir) = &cs.feasible_dir {
        let mut t = 1.0;
        for _ in 0..40 {
            let cand = theta + dir * t;
            if f(&cand).is_finite() {
                return Ok(cand);
            }
            t *= 2.0;
        }
    }
    Err(OptimError::NonFiniteStart)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quadratic(target: DVector<f64>) -> (impl Fn(&DVector<f64>) -> f64, impl Fn(&DVector<f64>) -> DVector<f64>) {
        let t2 = target.clone();
        (
            move |th: &DVector<f64>| -0.5 * (th - &target).norm_squared(),
            move |th: &DVector<f64>| -(th - &t2),
        )
    }

    #[test]
    fn unconstrained_quadratic() {
        let target = DVector::from_vec(vec![3.0, -1.0, 0.5]);
        let (f, g) = quadratic(target.clone());
        let cs = ConstraintSystem::empty(3);
        let r = maximize(f, g, &cs, &DVector::zeros(3), &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.theta, target, epsilon = 1e-7);
        assert_abs_diff_eq!(r.objective, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn active_constraint_projects_onto_boundary() {
        // maximize -||theta - (2, 1)||^2 / 2 subject to theta_2 - theta_1 >= eps;
        // solution is the projection (1.5, 1.5) with multiplier 0.5
        let (f, g) = quadratic(DVector::from_vec(vec![2.0, 1.0]));
        let mut a = DMatrix::zeros(1, 2);
        a[(0, 0)] = -1.0;
        a[(0, 1)] = 1.0;
        let cs = ConstraintSystem::new(a, Some(DVector::from_vec(vec![0.0, 1.0])));
        let r = maximize(
            f,
            g,
            &cs,
            &DVector::from_vec(vec![0.0, 1.0]),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(r.converged, "kkt {}", r.kkt_residual);
        assert_abs_diff_eq!(r.theta[0], 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.theta[1], 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.multipliers[0], 0.5, epsilon = 1e-5);
        assert_eq!(r.active, vec![0]);
    }

    #[test]
    fn inactive_constraint_leaves_interior_solution() {
        let (f, g) = quadratic(DVector::from_vec(vec![1.0, 2.0]));
        let mut a = DMatrix::zeros(1, 2);
        a[(0, 0)] = -1.0;
        a[(0, 1)] = 1.0;
        let cs = ConstraintSystem::new(a, Some(DVector::from_vec(vec![0.0, 1.0])));
        let r = maximize(
            f,
            g,
            &cs,
            &DVector::from_vec(vec![0.0, 1.0]),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.theta[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.theta[1], 2.0, epsilon = 1e-6);
        assert!(r.multipliers[0].abs() < 1e-6);
        assert!(r.active.is_empty());
    }

    #[test]
    fn neg_infinity_region_is_avoided() {
        // optimum at 2, objective -inf beyond 3
        let f = |th: &DVector<f64>| {
            if th[0] >= 3.0 {
                f64::NEG_INFINITY
            } else {
                -(th[0] - 2.0) * (th[0] - 2.0)
            }
        };
        let g = |th: &DVector<f64>| DVector::from_vec(vec![-2.0 * (th[0] - 2.0)]);
        let cs = ConstraintSystem::empty(1);
        let r = maximize(f, g, &cs, &DVector::from_vec(vec![0.0]), &OptimizerConfig::default())
            .unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.theta[0], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn feasible_init_repairs_violations() {
        let mut a = DMatrix::zeros(2, 3);
        // theta_2 - theta_1 >= eps, theta_3 - theta_2 >= eps
        a[(0, 0)] = -1.0;
        a[(0, 1)] = 1.0;
        a[(1, 1)] = -1.0;
        a[(1, 2)] = 1.0;
        let dir = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let cs = ConstraintSystem::new(a, Some(dir));
        let bad = DVector::from_vec(vec![1.0, 0.0, -2.0]);
        let fixed = feasible_init(&bad, &cs, 1e-3).unwrap();
        assert!(cs.is_feasible(&fixed));
        let ok = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        assert_eq!(feasible_init(&ok, &cs, 1e-3).unwrap(), ok);
    }

    #[test]
    fn deterministic_repeat_runs_are_identical() {
        let (f1, g1) = quadratic(DVector::from_vec(vec![0.3, -0.7, 1.9, 2.2]));
        let (f2, g2) = quadratic(DVector::from_vec(vec![0.3, -0.7, 1.9, 2.2]));
        let cs = ConstraintSystem::new(
            crate::basis::first_differences(4),
            Some(DVector::from_fn(4, |i, _| i as f64)),
        );
        let start = DVector::from_fn(4, |i, _| i as f64 * 0.1);
        let r1 = maximize(f1, g1, &cs, &start, &OptimizerConfig::default()).unwrap();
        let r2 = maximize(f2, g2, &cs, &start, &OptimizerConfig::default()).unwrap();
        assert_eq!(r1.theta, r2.theta);
        assert_eq!(r1.objective, r2.objective);
    }

    #[test]
    fn different_starts_agree() {
        let (fa, ga) = quadratic(DVector::from_vec(vec![5.0, -3.0]));
        let (fb, gb) = quadratic(DVector::from_vec(vec![5.0, -3.0]));
        let cs = ConstraintSystem::empty(2);
        let r1 = maximize(fa, ga, &cs, &DVector::zeros(2), &OptimizerConfig::default()).unwrap();
        let r2 = maximize(
            fb,
            gb,
            &cs,
            &DVector::from_vec(vec![100.0, 100.0]),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(r1.theta, r2.theta, epsilon = 1e-6);
    }

    #[test]
    fn multinomial_mle_matches_closed_form() {
        use crate::basis::{constraints_for, BasisSpec};
        use crate::data::{Dataset, Observation};
        use crate::dist::ErrorDist;
        use crate::likelihood::{total_loglik, total_score, ResponseKind, TransformationModel};

        let counts = [11usize, 4, 9, 6];
        let n: usize = counts.iter().sum();
        let basis = BasisSpec::Discrete { levels: 4 };
        let cs = constraints_for(&basis);
        let model = TransformationModel::new(
            ErrorDist::Normal,
            basis,
            cs.clone(),
            ResponseKind::Discrete { levels: 4 },
        )
        .unwrap();
        let mut obs = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                obs.push(Observation::exact((k + 1) as f64));
            }
        }
        let data = Dataset::from_parts(obs, vec![vec![]; n]);
        let f = |th: &DVector<f64>| total_loglik(&model, th, &data).unwrap();
        let g = |th: &DVector<f64>| total_score(&model, th, &data).unwrap();
        let start = DVector::from_vec(vec![-1.0, 0.0, 1.0]);
        let r = maximize(f, g, &cs, &start, &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        let mut cum = 0.0;
        for k in 0..3 {
            cum += counts[k] as f64 / n as f64;
            let expected = ErrorDist::Normal.quantile(cum).unwrap();
            assert_abs_diff_eq!(r.theta[k], expected, epsilon = 1e-6);
        }
    }

    #[test]
    fn dense_grid_cannot_beat_the_optimizer() {
        use crate::basis::{constraints_for, BasisSpec, Support};
        use crate::data::{Dataset, Observation};
        use crate::dist::ErrorDist;
        use crate::likelihood::{total_loglik, total_score, ResponseKind, TransformationModel};

        let basis = BasisSpec::Bernstein {
            order: 1,
            support: Support::new(0.0, 1.0).unwrap(),
        };
        let cs = constraints_for(&basis);
        let model = TransformationModel::new(
            ErrorDist::Normal,
            basis,
            cs.clone(),
            ResponseKind::Continuous,
        )
        .unwrap();
        let ys = [0.11, 0.25, 0.4, 0.43, 0.55, 0.62, 0.74, 0.8, 0.92];
        let obs: Vec<Observation> = ys.iter().map(|&y| Observation::exact(y)).collect();
        let data = Dataset::from_parts(obs, vec![vec![]; ys.len()]);
        let f = |th: &DVector<f64>| total_loglik(&model, th, &data).unwrap();
        let g = |th: &DVector<f64>| total_score(&model, th, &data).unwrap();
        let start = DVector::from_vec(vec![-1.0, 1.0]);
        let r = maximize(f, g, &cs, &start, &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        let mut best = f64::NEG_INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                let t0 = r.theta[0] - 0.5 + i as f64 / 200.0;
                let t1 = r.theta[1] - 0.5 + j as f64 / 200.0;
                if t1 > t0 {
                    best = best.max(f(&DVector::from_vec(vec![t0, t1])));
                }
            }
        }
        assert!(best <= r.objective + 1e-9, "grid {best} vs {}", r.objective);
    }

    #[test]
    fn reports_nonconvergence_within_budget() {
        // target violates the constraint, so one outer iteration cannot
        // reach a KKT point
        let (f, g) = quadratic(DVector::from_vec(vec![2.0, 1.0]));
        let mut a = DMatrix::zeros(1, 2);
        a[(0, 0)] = -1.0;
        a[(0, 1)] = 1.0;
        let cs = ConstraintSystem::new(a, Some(DVector::from_vec(vec![0.0, 1.0])));
        let tight = OptimizerConfig {
            max_outer: 1,
            max_inner: 1,
            ..OptimizerConfig::default()
        };
        let r = maximize(f, g, &cs, &DVector::from_vec(vec![0.0, 1.0]), &tight).unwrap();
        assert!(!r.converged);
    }
}
