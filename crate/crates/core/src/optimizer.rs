//! Riemannian conjugate gradient over a [`ProductPoint`].
//!
//! Directions use the Polak–Ribière+ coefficient with projection transport;
//! whenever the coefficient is clipped to zero or the direction fails to be a
//! descent direction the method restarts from steepest descent. Steps come
//! from backtracking Armijo search, warm-started at twice the previous
//! accepted step.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifolds::{self, ProductPoint, TangentVector};

/// Objective over a product manifold, supplied as cost plus per-factor
/// Euclidean gradient.
pub trait Problem {
    fn cost(&self, x: &ProductPoint) -> Result<f64> {
        Ok(self.cost_and_egrad(x)?.0)
    }

    fn cost_and_egrad(&self, x: &ProductPoint) -> Result<(f64, TangentVector)>;
}

/// Adapter turning a closure into a [`Problem`].
pub struct FnProblem<F>(pub F);

impl<F> Problem for FnProblem<F>
where
    F: Fn(&ProductPoint) -> Result<(f64, TangentVector)>,
{
    fn cost_and_egrad(&self, x: &ProductPoint) -> Result<(f64, TangentVector)> {
        (self.0)(x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop when `‖grad‖ ≤ grad_tol · (1 + |cost|)`.
    pub grad_tol: f64,
    /// Give up backtracking once `step · ‖direction‖` drops below this.
    pub step_tol: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// 0 = silent, 1 = per-run summary, 2 = per-iteration log lines.
    pub verbosity: u8,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            step_tol: 1e-10,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 25,
            verbosity: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return bad("solver tolerances must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("Armijo factor must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTolerance => "gradient_tolerance",
            Termination::MaxIterations => "max_iterations",
            Termination::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub point: ProductPoint,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Cost at the initial point followed by the cost after every accepted step.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
    pub gradient_evaluations: usize,
    pub cost_evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub point: ProductPoint,
    pub cost: f64,
    pub backtracks: usize,
    pub success: bool,
}

/// Backtracking Armijo search along `direction` from `x`.
///
/// `cost0` is the cost at `x` and `slope` the directional derivative
/// `⟨grad, direction⟩`, which must be negative. Trial points that fail to
/// retract (rank-deficient QR, loss of definiteness) count as rejections.
/// On failure the returned step is 0 and the point is `x`.
pub fn line_search_armijo<P: Problem + ?Sized>(
    problem: &P,
    x: &ProductPoint,
    cost0: f64,
    direction: &TangentVector,
    slope: f64,
    initial_step: f64,
    opts: &SolverOptions,
) -> Result<LineSearchOutcome> {
    if !(slope < 0.0) {
        return Err(Error::NotDescent(slope));
    }
    let dnorm = manifolds::product_norm(x, direction)?;
    let mut step = initial_step;
    for backtracks in 0..=opts.max_backtracks {
        if !(step * dnorm > opts.step_tol) {
            break;
        }
        if let Ok(trial) = manifolds::retract(x, direction, step) {
            let c = problem.cost(&trial)?;
            if c.is_finite() && c <= cost0 + opts.armijo * step * slope {
                return Ok(LineSearchOutcome {
                    step,
                    point: trial,
                    cost: c,
                    backtracks,
                    success: true,
                });
            }
        }
        step *= opts.backtrack;
    }
    Ok(LineSearchOutcome {
        step: 0.0,
        point: x.clone(),
        cost: cost0,
        backtracks: opts.max_backtracks,
        success: false,
    })
}

pub fn rcg_minimize<P: Problem + ?Sized>(
    problem: &P,
    init: ProductPoint,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    rcg_minimize_with(problem, init, opts, |_, _, _| {})
}

/// As [`rcg_minimize`], calling `observe(iteration, point, cost)` on the
/// initial point and after every accepted step.
pub fn rcg_minimize_with<P, F>(
    problem: &P,
    init: ProductPoint,
    opts: &SolverOptions,
    mut observe: F,
) -> Result<SolverReport>
where
    P: Problem + ?Sized,
    F: FnMut(usize, &ProductPoint, f64),
{
    opts.validate()?;
    let mut x = init;
    if !x.is_finite() {
        return Err(Error::NonFinite("initial point"));
    }
    let (mut cost, egrad) = problem.cost_and_egrad(&x)?;
    if !cost.is_finite() {
        return Err(Error::NonFinite("cost at initial point"));
    }
    if !egrad.is_finite() {
        return Err(Error::NonFinite("gradient at initial point"));
    }
    let mut grad_evals = 1;
    let mut cost_evals = 1;
    let mut grad = manifolds::egrad_to_rgrad(&x, &egrad)?;
    let mut gnorm2 = manifolds::product_inner(&x, &grad, &grad)?;
    let mut dir = grad.scale(-1.0);
    let mut step_guess: Option<f64> = None;
    let mut history = vec![cost];
    let mut iterations = 0;
    observe(0, &x, cost);

    let termination = loop {
        let gnorm = gnorm2.sqrt();
        if gnorm <= opts.grad_tol * (1.0 + cost.abs()) {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }

        let mut slope = manifolds::product_inner(&x, &grad, &dir)?;
        let mut steepest = false;
        if !(slope < 0.0) {
            dir = grad.scale(-1.0);
            slope = -gnorm2;
            steepest = true;
        }
        let initial = |d: &TangentVector| -> Result<f64> {
            Ok(match step_guess {
                Some(s) => s,
                None => 1.0 / manifolds::product_norm(&x, d)?,
            })
        };
        let mut ls = line_search_armijo(problem, &x, cost, &dir, slope, initial(&dir)?, opts)?;
        cost_evals += ls.backtracks + 1;
        if !ls.success && !steepest {
            dir = grad.scale(-1.0);
            slope = -gnorm2;
            ls = line_search_armijo(problem, &x, cost, &dir, slope, initial(&dir)?, opts)?;
            cost_evals += ls.backtracks + 1;
        }
        if !ls.success {
            break Termination::LineSearchFailed;
        }

        let x_new = ls.point;
        let (cost_new, egrad_new) = problem.cost_and_egrad(&x_new)?;
        grad_evals += 1;
        if !cost_new.is_finite() || !egrad_new.is_finite() {
            return Err(Error::NonFinite("cost or gradient during optimization"));
        }
        let grad_new = manifolds::egrad_to_rgrad(&x_new, &egrad_new)?;
        let grad_old_t = manifolds::transport(&x, &x_new, &grad)?;
        let dir_t = manifolds::transport(&x, &x_new, &dir)?;
        let diff = grad_new.lincomb(1.0, &grad_old_t, -1.0);
        let beta = (manifolds::product_inner(&x_new, &grad_new, &diff)? / gnorm2).max(0.0);
        dir = grad_new.lincomb(-1.0, &dir_t, beta);

        step_guess = Some(2.0 * ls.step);
        x = x_new;
        cost = cost_new;
        grad = grad_new;
        gnorm2 = manifolds::product_inner(&x, &grad, &grad)?;
        iterations += 1;
        history.push(cost);
        observe(iterations, &x, cost);
        if opts.verbosity >= 2 {
            log::info!(
                "iter={iterations} cost={cost:.10e} grad_norm={:.3e} step={:.3e} beta={beta:.3}",
                gnorm2.sqrt(),
                ls.step
            );
        }
    };

    let grad_norm = gnorm2.sqrt();
    if opts.verbosity >= 1 {
        log::info!(
            "solver finished: {} after {iterations} iterations, cost={cost:.10e}, grad_norm={grad_norm:.3e}",
            termination.as_str()
        );
    }
    Ok(SolverReport {
        point: x,
        cost,
        grad_norm,
        iterations,
        cost_history: history,
        termination,
        gradient_evaluations: grad_evals,
        cost_evaluations: cost_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, Mat};
    use crate::manifolds::{OrthPoint, SpdPoint};
    use crate::synthetic::{random_matrix, random_spd, rng};

    fn orth_only(d: usize) -> ProductPoint {
        ProductPoint::new(vec![OrthPoint::identity(d)], None, vec![]).unwrap()
    }

    #[test]
    fn constant_cost_returns_init_immediately() {
        let p = FnProblem(|x: &ProductPoint| Ok((3.0, x.zero_tangent())));
        let x0 = orth_only(3);
        let rep = rcg_minimize(&p, x0.clone(), &SolverOptions::default()).unwrap();
        assert_eq!(rep.point, x0);
        assert_eq!(rep.gradient_evaluations, 1);
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.termination, Termination::GradientTolerance);
    }

    #[test]
    fn non_finite_init_rejected() {
        let p = FnProblem(|x: &ProductPoint| Ok((f64::NAN, x.zero_tangent())));
        assert!(matches!(
            rcg_minimize(&p, orth_only(2), &SolverOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn polar_factor_maximizes_trace() {
        let mut r = rng(31);
        for d in [3, 6, 10] {
            // Starting from I the iterates stay in SO(d), so use det(A) > 0.
            let mut a = random_matrix(&mut r, d, d);
            if a.determinant() < 0.0 {
                a.column_mut(0).neg_mut();
            }
            let a2 = a.clone();
            let p = FnProblem(move |x: &ProductPoint| {
                let u = x.orth[0].matrix();
                Ok((
                    -linalg::frob(u, &a2),
                    crate::manifolds::TangentVector { orth: vec![-a2.clone()], spd: None, free: vec![] },
                ))
            });
            let rep = rcg_minimize(&p, orth_only(d), &SolverOptions::default()).unwrap();
            let nuclear: f64 = a.clone().svd(false, false).singular_values.sum();
            let tr = -rep.cost;
            assert!((tr - nuclear).abs() <= 1e-6, "d={d}: {tr} vs {nuclear}");
            assert!(rep.point.max_orthogonality_error() <= 1e-10);
        }
    }

    #[test]
    fn spd_least_squares_converges_to_target() {
        let mut r = rng(32);
        let c = random_spd(&mut r, 5).into_matrix();
        let c2 = c.clone();
        let p = FnProblem(move |x: &ProductPoint| {
            let b = x.spd.as_ref().unwrap().matrix();
            let diff = b - &c2;
            Ok((
                diff.norm_squared(),
                crate::manifolds::TangentVector { orth: vec![], spd: Some(diff * 2.0), free: vec![] },
            ))
        });
        let x0 = ProductPoint::new(vec![], Some(SpdPoint::identity(5)), vec![]).unwrap();
        let opts = SolverOptions { grad_tol: 1e-10, ..Default::default() };
        let rep = rcg_minimize(&p, x0, &opts).unwrap();
        let b = rep.point.spd.unwrap().into_matrix();
        assert!((b - c).norm() <= 1e-5);
        for w in rep.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn armijo_first_trial_accepted_on_quadratic() {
        // f(W) = ‖W − T‖² on a free factor; from W = 0 along −grad, the
        // exact minimizer is at step 1/2 of the raw gradient.
        let t = Mat::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let t2 = t.clone();
        let p = FnProblem(move |x: &ProductPoint| {
            let diff = &x.free[0] - &t2;
            Ok((
                diff.norm_squared(),
                crate::manifolds::TangentVector { orth: vec![], spd: None, free: vec![diff * 2.0] },
            ))
        });
        let x = ProductPoint::new(vec![], None, vec![Mat::zeros(2, 2)]).unwrap();
        let (f0, g) = p.cost_and_egrad(&x).unwrap();
        let dir = g.scale(-1.0);
        let slope = -g.free[0].norm_squared();
        let ls = line_search_armijo(&p, &x, f0, &dir, slope, 0.5, &SolverOptions::default()).unwrap();
        assert!(ls.success);
        assert_eq!(ls.backtracks, 0);
        assert_eq!(ls.step, 0.5);
        assert!(ls.cost < 1e-20);

        let up = g.clone();
        assert!(matches!(
            line_search_armijo(&p, &x, f0, &up, -slope, 1.0, &SolverOptions::default()),
            Err(Error::NotDescent(_))
        ));
    }

    #[test]
    fn bad_options_rejected() {
        let p = FnProblem(|x: &ProductPoint| Ok((0.0, x.zero_tangent())));
        let opts = SolverOptions { backtrack: 1.5, ..Default::default() };
        assert!(rcg_minimize(&p, orth_only(2), &opts).is_err());
    }
}
