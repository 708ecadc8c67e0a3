//! Proximal gradient (ISTA) and its Nesterov-accelerated form (FISTA) for
//! `c·½‖Ax − b‖² + λ‖x‖₁`.

use rand_distr::{Distribution, StandardNormal};

use super::{
    check_problem, prepare_targets, soft_threshold, CoefficientVector, SolverConfig, StepPolicy,
};
use crate::error::{Error, Result};
use crate::preprocess::rng_from_seed;
use crate::tensorio::{dot, Matrix};

const POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-8;
const MAX_BACKTRACKS: usize = 200;
/// Objective increases up to this relative size are floating-point noise,
/// not divergence.
const ROUNDING_SLACK: f64 = 1e-12;

/// Largest eigenvalue of `c·AᵀA` by power iteration from a fixed seeded
/// start vector.
pub fn lipschitz_constant(a: &Matrix, c: f64) -> f64 {
    let d = a.n_cols();
    if d == 0 || a.n_rows() == 0 {
        return 0.0;
    }
    let mut rng = rng_from_seed(0x5eed);
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut est = 0.0;
    for _ in 0..POWER_ITERS {
        let av = a.matvec(&v).expect("dims");
        let w = a.tmatvec(&av).expect("dims");
        let rayleigh = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let done = (rayleigh - est).abs() <= POWER_TOL * rayleigh.abs();
        est = rayleigh;
        if done {
            break;
        }
    }
    c * est
}

struct Problem<'a> {
    a: &'a Matrix,
    b: Vec<f64>,
    c: f64,
    lambda: f64,
}

impl Problem<'_> {
    /// Residual `Ax − b` and smooth value `c·½‖Ax − b‖²`.
    fn smooth(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let r: Vec<f64> = self
            .a
            .rows()
            .zip(&self.b)
            .map(|(row, bi)| dot(row, x) - bi)
            .collect();
        let f = 0.5 * self.c * dot(&r, &r);
        (r, f)
    }

    fn grad_from_residual(&self, r: &[f64]) -> Vec<f64> {
        let mut g = self.a.tmatvec(r).expect("dims");
        g.iter_mut().for_each(|v| *v *= self.c);
        g
    }

    fn l1(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox_step(&self, y: &[f64], g: &[f64], t: f64) -> Vec<f64> {
        y.iter()
            .zip(g)
            .map(|(yi, gi)| soft_threshold(yi - t * gi, t * self.lambda))
            .collect()
    }

    /// One proximal step from `y`. Under backtracking, shrinks `t` until
    /// `f(x⁺) ≤ f(y) + ∇f(y)ᵀ(x⁺ − y) + ‖x⁺ − y‖²/(2t)`.
    fn step(
        &self,
        y: &[f64],
        fy: f64,
        g: &[f64],
        t: &mut f64,
        policy: StepPolicy,
    ) -> (Vec<f64>, f64) {
        let mut tries = 0;
        loop {
            let x = self.prox_step(y, g, *t);
            let (_, fx) = self.smooth(&x);
            let StepPolicy::Backtracking { beta, .. } = policy else {
                return (x, fx);
            };
            let mut lin = 0.0;
            let mut quad = 0.0;
            for ((xi, yi), gi) in x.iter().zip(y).zip(g) {
                let d = xi - yi;
                lin += gi * d;
                quad += d * d;
            }
            let bound = fy + lin + quad / (2.0 * *t);
            tries += 1;
            if fx <= bound + ROUNDING_SLACK * fy.abs() || tries >= MAX_BACKTRACKS {
                return (x, fx);
            }
            *t *= beta;
        }
    }
}

fn setup<'a>(
    a: &'a Matrix,
    b: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(Problem<'a>, f64, f64)> {
    check_problem(a, b, lambda)?;
    cfg.validate()?;
    let (b, intercept) = prepare_targets(b, cfg.center_targets);
    let c = cfg.scale_mode.factor(a.n_rows());
    let t = match cfg.step_policy {
        StepPolicy::Fixed { t } => t,
        StepPolicy::Lipschitz => {
            let l = lipschitz_constant(a, c);
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
        StepPolicy::Backtracking { t0, .. } => t0,
    };
    Ok((Problem { a, b, c, lambda }, t, intercept))
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

fn increase_is_rounding(prev: f64, next: f64) -> bool {
    next - prev <= ROUNDING_SLACK * prev.abs().max(f64::MIN_POSITIVE)
}

/// ISTA: `x ← S(x − t·∇f(x), t·λ)` from `x = 0`.
///
/// Every recorded objective is no larger than the one before it. If a step
/// would raise the objective by more than rounding, fixed and Lipschitz
/// steps fail with [`Error::Divergence`]. A rounding-level rise means the
/// iterate is stationary to machine precision; the solver stops there and
/// reports convergence.
pub fn ista(a: &Matrix, b: &[f64], lambda: f64, cfg: &SolverConfig) -> Result<CoefficientVector> {
    let (p, mut t, intercept) = setup(a, b, lambda, cfg)?;
    let d = a.n_cols();
    let mut x = vec![0.0; d];
    let (mut r, mut f) = p.smooth(&x);
    let mut obj = f + p.l1(&x);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let g = p.grad_from_residual(&r);
        let (x_new, f_new) = p.step(&x, f, &g, &mut t, cfg.step_policy);
        let obj_new = f_new + p.l1(&x_new);
        if obj_new > obj {
            if increase_is_rounding(obj, obj_new) {
                converged = true;
                break;
            }
            return Err(Error::Divergence {
                iteration: iterations + 1,
                previous: obj,
                current: obj_new,
            });
        }
        iterations += 1;
        let delta = max_abs_diff(&x_new, &x);
        x = x_new;
        (r, f) = p.smooth(&x);
        debug_assert!((f - f_new).abs() <= 1e-12 * f.abs().max(1.0));
        obj = obj_new;
        history.push(obj);
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(CoefficientVector {
        coef: x,
        intercept,
        lambda,
        objective_history: history,
        iterations,
        converged,
    })
}

/// FISTA with function-value restart: whenever a step would raise the
/// objective, momentum is reset and the step is retaken from the last
/// iterate.
pub fn fista(a: &Matrix, b: &[f64], lambda: f64, cfg: &SolverConfig) -> Result<CoefficientVector> {
    let (p, mut t, intercept) = setup(a, b, lambda, cfg)?;
    let d = a.n_cols();
    let mut x = vec![0.0; d];
    let mut y = x.clone();
    let mut theta = 1.0_f64;
    let (_, f0) = p.smooth(&x);
    let mut obj = f0 + p.l1(&x);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut fresh = true;

    while iterations < cfg.max_iter {
        iterations += 1;
        let (ry, fy) = p.smooth(&y);
        let g = p.grad_from_residual(&ry);
        let (x_new, f_new) = p.step(&y, fy, &g, &mut t, cfg.step_policy);
        let obj_new = f_new + p.l1(&x_new);

        if obj_new > obj {
            if fresh {
                // plain proximal step from x failed to descend
                if increase_is_rounding(obj, obj_new) {
                    history.push(obj);
                    converged = true;
                    break;
                }
                return Err(Error::Divergence {
                    iteration: iterations,
                    previous: obj,
                    current: obj_new,
                });
            }
            theta = 1.0;
            y.clone_from(&x);
            fresh = true;
            history.push(obj);
            continue;
        }

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        let delta = max_abs_diff(&x_new, &x);
        y = x_new
            .iter()
            .zip(&x)
            .map(|(xn, xo)| xn + momentum * (xn - xo))
            .collect();
        x = x_new;
        theta = theta_next;
        fresh = false;
        obj = obj_new;
        history.push(obj);
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(CoefficientVector {
        coef: x,
        intercept,
        lambda,
        objective_history: history,
        iterations,
        converged,
    })
}
