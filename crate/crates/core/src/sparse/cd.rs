//! Cyclic coordinate descent.

use super::{
    check_problem, penalized, prepare_targets, soft_threshold, CoefficientVector, ElasticNetParams,
    SolverConfig,
};
use crate::error::Result;
use crate::tensorio::{dot, Matrix};

/// Lasso by cyclic coordinate descent.
///
/// Coordinate update, with `c` the scale factor and `r = y − Xβ`:
/// `ρⱼ = c·xⱼᵀr + zⱼβⱼ`, `zⱼ = c·‖xⱼ‖²`, `βⱼ ← S(ρⱼ, λ)/zⱼ`.
/// All-zero columns stay at 0. Stops once a full sweep moves no coordinate
/// by `tol` or more.
pub fn lasso_cd(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<CoefficientVector> {
    check_problem(x, y, lambda)?;
    cfg.validate()?;
    coordinate_descent(x, y, lambda, 0.0, cfg)
}

/// Elastic Net by cyclic coordinate descent: `βⱼ ← S(ρⱼ, λ₁)/(zⱼ + λ₂)`.
///
/// The returned `lambda` is `λ₁`.
pub fn elastic_net_cd(
    x: &Matrix,
    y: &[f64],
    p: &ElasticNetParams,
    cfg: &SolverConfig,
) -> Result<CoefficientVector> {
    p.validate()?;
    check_problem(x, y, p.l1())?;
    cfg.validate()?;
    coordinate_descent(x, y, p.l1(), p.l2(), cfg)
}

fn coordinate_descent(
    x: &Matrix,
    y: &[f64],
    l1: f64,
    l2: f64,
    cfg: &SolverConfig,
) -> Result<CoefficientVector> {
    let (m, d) = x.shape();
    let c = cfg.scale_mode.factor(m);
    let (y, intercept) = prepare_targets(y, cfg.center_targets);

    // column-major copy for contiguous column access
    let cols = x.transpose();
    let z: Vec<f64> = (0..d)
        .map(|j| {
            let col = cols.row(j);
            c * dot(col, col)
        })
        .collect();

    let mut beta = vec![0.0; d];
    let mut r = y.clone();
    let mut history = vec![penalized(&r, &beta, l1, l2, c)];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cfg.max_iter {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            if z[j] == 0.0 {
                continue;
            }
            let col = cols.row(j);
            let old = beta[j];
            let rho = c * dot(col, &r) + z[j] * old;
            let new = soft_threshold(rho, l1) / (z[j] + l2);
            let delta = new - old;
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(col) {
                    *ri -= xi * delta;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        // refresh the residual so incremental updates don't drift
        for (ri, (row, yi)) in r.iter_mut().zip(x.rows().zip(&y)) {
            *ri = yi - dot(row, &beta);
        }
        history.push(penalized(&r, &beta, l1, l2, c));
        if max_delta < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(CoefficientVector {
        coef: beta,
        intercept,
        lambda: l1,
        objective_history: history,
        iterations: sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::sparse::{lasso_objective, ScaleMode};

    fn univariate() -> (Matrix, Vec<f64>) {
        (Matrix::from_rows(&[[1.0], [1.0]]).unwrap(), vec![2.0, 4.0])
    }

    fn tight() -> SolverConfig {
        SolverConfig::default()
            .with_tol(1e-12)
            .with_max_iter(10_000)
    }

    #[test]
    fn univariate_closed_form() {
        let (x, y) = univariate();
        // oracle: S((1/m)Σxy, λ) / ((1/m)Σx²) = S(3, λ)
        for (lambda, want) in [(1.0, 2.0), (3.5, 0.0), (0.0, 3.0)] {
            let c = lasso_cd(&x, &y, lambda, &tight()).unwrap();
            assert!((c.coef[0] - want).abs() < 1e-12, "λ={lambda}: {:?}", c.coef);
            assert!(c.converged);
            assert_eq!(c.intercept, 0.0);
        }
    }

    #[test]
    fn centered_targets_store_intercept() {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        let c = lasso_cd(&x, &[2.0, 4.0], 0.0, &tight().centered(true)).unwrap();
        assert_eq!(c.intercept, 3.0);
        assert!((c.coef[0] - 1.0).abs() < 1e-12);
        let p = c.predict(&x).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-12 && (p[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_column_stays_zero() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [0.0, 2.0], [0.0, -1.0]]).unwrap();
        let c = lasso_cd(&x, &[1.0, 2.0, -1.0], 0.01, &tight()).unwrap();
        assert_eq!(c.coef[0], 0.0);
        assert!(c.coef[1] > 0.9);
    }

    #[test]
    fn rejects_bad_input() {
        let (x, _) = univariate();
        assert!(matches!(
            lasso_cd(&x, &[1.0, f64::NAN], 0.1, &tight()),
            Err(Error::Contract(_))
        ));
        assert!(lasso_cd(&x, &[1.0], 0.1, &tight()).is_err());
        assert!(lasso_cd(&x, &[1.0, 2.0], -0.1, &tight()).is_err());
        let nan_x = Matrix::from_rows(&[[f64::INFINITY], [1.0]]).unwrap();
        assert!(lasso_cd(&nan_x, &[1.0, 2.0], 0.1, &tight()).is_err());
    }

    #[test]
    fn history_is_recorded_and_nonincreasing() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.7, 0.1], [-0.3, 0.4]]).unwrap();
        let y = [1.0, -0.5, 0.8, 0.1];
        let c = lasso_cd(&x, &y, 0.05, &tight()).unwrap();
        assert_eq!(c.objective_history.len(), c.iterations + 1);
        for w in c.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let direct = lasso_objective(&x, &y, &c.coef, 0.05, ScaleMode::Mean).unwrap();
        assert!((direct - c.final_objective()).abs() < 1e-14);
    }

    #[test]
    fn enet_reduces_to_lasso_and_ols() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [0.7, 0.1], [-0.3, 0.4]]).unwrap();
        let y = [1.0, -0.5, 0.8, 0.1];
        let l = lasso_cd(&x, &y, 0.05, &tight()).unwrap();
        let e =
            elastic_net_cd(&x, &y, &ElasticNetParams::new(0.05, 1.0).unwrap(), &tight()).unwrap();
        assert_eq!(l.coef, e.coef);
        // alpha = 0: normal equations XᵀXβ = Xᵀy solved by Cramer's rule
        let e =
            elastic_net_cd(&x, &y, &ElasticNetParams::new(0.0, 0.5).unwrap(), &tight()).unwrap();
        let xtx = x.transpose().matmul(&x).unwrap();
        let xty = x.tmatvec(&y).unwrap();
        let det = xtx.get(0, 0) * xtx.get(1, 1) - xtx.get(0, 1) * xtx.get(1, 0);
        let b0 = (xty[0] * xtx.get(1, 1) - xtx.get(0, 1) * xty[1]) / det;
        let b1 = (xtx.get(0, 0) * xty[1] - xtx.get(1, 0) * xty[0]) / det;
        assert!((e.coef[0] - b0).abs() < 1e-9 && (e.coef[1] - b1).abs() < 1e-9);
    }

    #[test]
    fn sum_mode_uses_unscaled_data_term() {
        // sum mode on the univariate problem: β = S(Σxy, λ)/Σx² = S(6, 2)/2
        let (x, y) = univariate();
        let c = lasso_cd(&x, &y, 2.0, &tight().with_scale(ScaleMode::Sum)).unwrap();
        assert!((c.coef[0] - 2.0).abs() < 1e-12);
    }
}
