//! L1-regularized least squares: the soft-thresholding operator, coordinate
//! descent for the Lasso and Elastic Net, proximal gradient (ISTA/FISTA),
//! and the support/selection utilities built on their output.
//!
//! All solvers minimize
//!
//! ```text
//! c · ½‖Xβ − y‖² + λ₁‖β‖₁ + ½λ₂‖β‖²
//! ```
//!
//! where `c = 1/m` in [`ScaleMode::Mean`] and `c = 1` in [`ScaleMode::Sum`].
//! There is no intercept column; with `center_targets` the solver subtracts
//! `mean(y)` first and stores it as the intercept.

mod cd;
mod prox;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{self, dot, Matrix};

pub use cd::{elastic_net_cd, lasso_cd};
pub use prox::{fista, ista, lipschitz_constant};

/// Default threshold below which a coefficient counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

/// How the squared-error term is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    /// `1/(2m)‖Xβ − y‖²`
    #[default]
    Mean,
    /// `½‖Xβ − y‖²`
    Sum,
}

impl ScaleMode {
    pub(crate) fn factor(self, m: usize) -> f64 {
        match self {
            ScaleMode::Mean => 1.0 / m as f64,
            ScaleMode::Sum => 1.0,
        }
    }
}

/// Step-size rule for the proximal-gradient solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "policy")]
pub enum StepPolicy {
    /// Constant step `t`; must satisfy `t ≤ 1/L`.
    Fixed { t: f64 },
    /// `t = 1/L` with `L` estimated by power iteration.
    #[default]
    Lipschitz,
    /// Start at `t0`, shrink by `beta` until sufficient decrease holds.
    Backtracking { beta: f64, t0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "SolverConfig::default_tol")]
    pub tol: f64,
    #[serde(default = "SolverConfig::default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub scale_mode: ScaleMode,
    #[serde(default)]
    pub step_policy: StepPolicy,
    /// Subtract `mean(y)` before solving and keep it as the intercept.
    #[serde(default)]
    pub center_targets: bool,
}

impl SolverConfig {
    fn default_tol() -> f64 {
        1e-6
    }

    fn default_max_iter() -> usize {
        1000
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_scale(mut self, scale_mode: ScaleMode) -> Self {
        self.scale_mode = scale_mode;
        self
    }

    pub fn with_step(mut self, step_policy: StepPolicy) -> Self {
        self.step_policy = step_policy;
        self
    }

    pub fn centered(mut self, center: bool) -> Self {
        self.center_targets = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::contract(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::contract("max_iter must be positive"));
        }
        match self.step_policy {
            StepPolicy::Fixed { t } if !(t > 0.0 && t.is_finite()) => Err(Error::contract(
                format!("fixed step must be positive, got {t}"),
            )),
            StepPolicy::Backtracking { beta, t0 }
                if !(beta > 0.0 && beta < 1.0) || !(t0 > 0.0 && t0.is_finite()) =>
            {
                Err(Error::contract(format!(
                    "backtracking needs 0 < beta < 1 and t0 > 0, got beta={beta}, t0={t0}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_iter: 1000,
            scale_mode: ScaleMode::Mean,
            step_policy: StepPolicy::Lipschitz,
            center_targets: false,
        }
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub coef: Vec<f64>,
    /// `mean(y)` when targets were centered, else 0.
    pub intercept: f64,
    /// The L1 weight the solver was run with.
    pub lambda: f64,
    /// Objective value after each iteration (sweep for coordinate descent).
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CoefficientVector {
    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().expect("non-empty history")
    }

    pub fn support(&self, zero_tol: f64) -> FeatureMask {
        support(self, zero_tol)
    }

    pub fn l1_norm(&self) -> f64 {
        self.coef.iter().map(|c| c.abs()).sum()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.matvec(&self.coef)?
            .into_iter()
            .map(|v| v + self.intercept)
            .collect())
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::row_vector(&self.coef)
    }
}

/// Elastic Net hyperparameters: `λ₁ = alpha·l1_ratio`, `λ₂ = alpha·(1 − l1_ratio)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetParams {
    pub alpha: f64,
    pub l1_ratio: f64,
}

impl ElasticNetParams {
    pub fn new(alpha: f64, l1_ratio: f64) -> Result<Self> {
        let p = ElasticNetParams { alpha, l1_ratio };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::contract(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::contract(format!(
                "l1_ratio must lie in [0, 1], got {}",
                self.l1_ratio
            )));
        }
        Ok(())
    }

    pub fn l1(&self) -> f64 {
        self.alpha * self.l1_ratio
    }

    pub fn l2(&self) -> f64 {
        self.alpha * (1.0 - self.l1_ratio)
    }
}

/// Ascending indices of selected features out of `source_dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    selected: Vec<usize>,
    source_dim: usize,
}

impl FeatureMask {
    /// Sorts and deduplicates `selected`; rejects indices `>= source_dim`.
    pub fn new(mut selected: Vec<usize>, source_dim: usize) -> Result<Self> {
        selected.sort_unstable();
        selected.dedup();
        if let Some(&bad) = selected.iter().find(|&&i| i >= source_dim) {
            return Err(Error::contract(format!(
                "mask index {bad} out of range for dimension {source_dim}"
            )));
        }
        Ok(FeatureMask {
            selected,
            source_dim,
        })
    }

    pub fn full(source_dim: usize) -> Self {
        FeatureMask {
            selected: (0..source_dim).collect(),
            source_dim,
        }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Text form: a `# source_dim N` line, then one index per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# source_dim {}\n", self.source_dim);
        for i in &self.selected {
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    /// Parses [`FeatureMask::to_text`] output. Without the `source_dim`
    /// comment, `default_dim` must be supplied.
    pub fn from_text(text: &str, default_dim: Option<usize>) -> Result<Self> {
        let mut dim = default_dim;
        let mut idx = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("source_dim") {
                    dim = Some(v.trim().parse().map_err(|_| Error::Parse {
                        line: n + 1,
                        col: None,
                        msg: format!("bad source_dim `{}`", v.trim()),
                    })?);
                }
                continue;
            }
            idx.push(t.parse().map_err(|_| Error::Parse {
                line: n + 1,
                col: None,
                msg: format!("`{t}` is not a feature index"),
            })?);
        }
        let dim = dim.ok_or_else(|| {
            Error::Format("mask file has no `# source_dim` line and none was given".into())
        })?;
        FeatureMask::new(idx, dim)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        tensorio::save_text(path, &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>, default_dim: Option<usize>) -> Result<Self> {
        FeatureMask::from_text(&tensorio::load_text(path)?, default_dim)
    }
}

/// `sign(z)·max(|z| − t, 0)`, the proximal operator of `t·|·|`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub(crate) fn check_problem(x: &Matrix, y: &[f64], lambda: f64) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::contract(format!(
            "design matrix has {} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if x.n_rows() == 0 {
        return Err(Error::contract("design matrix has no rows"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::contract(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if !x.all_finite() {
        return Err(Error::contract("design matrix contains non-finite values"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("targets contain non-finite values"));
    }
    Ok(())
}

/// Returns `(targets, intercept)`, centered when requested.
pub(crate) fn prepare_targets(y: &[f64], center: bool) -> (Vec<f64>, f64) {
    if center && !y.is_empty() {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        (y.iter().map(|v| v - mean).collect(), mean)
    } else {
        (y.to_vec(), 0.0)
    }
}

fn residual(x: &Matrix, y: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != x.n_cols() {
        return Err(Error::contract(format!(
            "coefficient vector has {} entries, matrix has {} columns",
            beta.len(),
            x.n_cols()
        )));
    }
    if y.len() != x.n_rows() {
        return Err(Error::contract(format!(
            "matrix has {} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    Ok(x.rows().zip(y).map(|(r, yi)| dot(r, beta) - yi).collect())
}

/// Lasso objective: `c·½‖Xβ − y‖² + λ‖β‖₁` with `c` from `scale_mode`.
pub fn lasso_objective(
    x: &Matrix,
    y: &[f64],
    beta: &[f64],
    lambda: f64,
    scale_mode: ScaleMode,
) -> Result<f64> {
    elastic_net_objective(x, y, beta, lambda, 0.0, scale_mode)
}

/// `c·½‖Xβ − y‖² + λ₁‖β‖₁ + ½λ₂‖β‖²`.
pub fn elastic_net_objective(
    x: &Matrix,
    y: &[f64],
    beta: &[f64],
    l1: f64,
    l2: f64,
    scale_mode: ScaleMode,
) -> Result<f64> {
    let r = residual(x, y, beta)?;
    Ok(penalized(&r, beta, l1, l2, scale_mode.factor(x.n_rows())))
}

#[inline]
pub(crate) fn penalized(r: &[f64], beta: &[f64], l1: f64, l2: f64, c: f64) -> f64 {
    let data = 0.5 * c * dot(r, r);
    let mut pen = 0.0;
    if l1 != 0.0 {
        pen += l1 * beta.iter().map(|b| b.abs()).sum::<f64>();
    }
    if l2 != 0.0 {
        pen += 0.5 * l2 * dot(beta, beta);
    }
    data + pen
}

/// Gradient of `½‖Ax − b‖²`, i.e. `Aᵀ(Ax − b)`.
pub fn gradient_smooth(a: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let r = residual(a, b, x)?;
    a.tmatvec(&r)
}

/// Indices with `|coef| > zero_tol`, ascending.
pub fn support(c: &CoefficientVector, zero_tol: f64) -> FeatureMask {
    let selected = c
        .coef
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > zero_tol)
        .map(|(i, _)| i)
        .collect();
    FeatureMask {
        selected,
        source_dim: c.coef.len(),
    }
}

/// Column subset of `x` in mask order.
pub fn select_features(x: &Matrix, m: &FeatureMask) -> Result<Matrix> {
    if m.source_dim() != x.n_cols() {
        return Err(Error::contract(format!(
            "mask is over {} features, matrix has {} columns",
            m.source_dim(),
            x.n_cols()
        )));
    }
    let mut values = Vec::with_capacity(x.n_rows() * m.len());
    for r in x.rows() {
        values.extend(m.selected().iter().map(|&j| r[j]));
    }
    Matrix::new(x.n_rows(), m.len(), values)
}

/// Spatial layout of a flattened `(row, col, channel)` feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        GridShape {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Count of selected features per spatial cell; flat index
/// `(r·width + c)·channels + ch`.
pub fn relevance_grid(m: &FeatureMask, shape: GridShape) -> Result<Matrix> {
    if m.source_dim() != shape.len() {
        return Err(Error::contract(format!(
            "mask is over {} features but grid {}x{}x{} holds {}",
            m.source_dim(),
            shape.height,
            shape.width,
            shape.channels,
            shape.len()
        )));
    }
    let mut grid = Matrix::zeros(shape.height, shape.width);
    for &flat in m.selected() {
        let cell = flat / shape.channels;
        let (r, c) = (cell / shape.width, cell % shape.width);
        grid.set(r, c, grid.get(r, c) + 1.0);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    #[test]
    fn objective_examples() {
        let x = Matrix::identity(2);
        let y = [1.0, 1.0];
        let v = lasso_objective(&x, &y, &[0.0, 0.0], 0.5, ScaleMode::Sum).unwrap();
        assert_eq!(v, 1.0);
        let v = lasso_objective(&x, &y, &y, 0.5, ScaleMode::Sum).unwrap();
        assert_eq!(v, 1.0);
        // data term in mean mode is the sum-mode data term over m
        let beta = [0.3, -0.2];
        let sum = lasso_objective(&x, &y, &beta, 0.0, ScaleMode::Sum).unwrap();
        let mean = lasso_objective(&x, &y, &beta, 0.0, ScaleMode::Mean).unwrap();
        assert!((mean - sum / 2.0).abs() < 1e-15);
        assert!(lasso_objective(&x, &[1.0], &beta, 0.0, ScaleMode::Sum).is_err());
    }

    #[test]
    fn gradient_zero_cases() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let b = [1.0, -1.0, 2.0];
        let g = gradient_smooth(&a, &b, &[0.0, 0.0]).unwrap();
        let atb = a.tmatvec(&b).unwrap();
        assert_eq!(g, atb.iter().map(|v| -v).collect::<Vec<_>>());
        let i = Matrix::identity(3);
        assert_eq!(gradient_smooth(&i, &b, &b).unwrap(), vec![0.0; 3]);
        assert!(gradient_smooth(&a, &b, &[0.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = crate::preprocess::rng_from_seed(11);
        for _ in 0..10 {
            let (m, d) = (rng.random_range(3..12), rng.random_range(2..9));
            let vals: Vec<f64> = (0..m * d).map(|_| rng.sample(StandardNormal)).collect();
            let a = Matrix::new(m, d, vals).unwrap();
            let b: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let f = |x: &[f64]| lasso_objective(&a, &b, x, 0.0, ScaleMode::Sum).unwrap();
            let g = gradient_smooth(&a, &b, &x).unwrap();
            let h = 1e-6;
            for j in 0..d {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0));
            }
        }
    }

    fn coef(v: Vec<f64>) -> CoefficientVector {
        CoefficientVector {
            coef: v,
            intercept: 0.0,
            lambda: 0.0,
            objective_history: vec![0.0],
            iterations: 0,
            converged: true,
        }
    }

    #[test]
    fn support_threshold() {
        let c = coef(vec![0.0, 0.3, -1e-15, 2.0]);
        assert_eq!(support(&c, 1e-12).selected(), &[1, 3]);
        assert_eq!(support(&c, 0.0).selected(), &[1, 2, 3]);
        assert!(support(&coef(vec![0.0; 4]), 1e-12).is_empty());
    }

    #[test]
    fn select_columns() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let m = FeatureMask::new(vec![2, 0], 3).unwrap();
        let s = select_features(&x, &m).unwrap();
        assert_eq!(s.values(), &[1.0, 3.0, 4.0, 6.0]);
        assert_eq!(select_features(&x, &FeatureMask::full(3)).unwrap(), x);
        let e = select_features(&x, &FeatureMask::new(vec![], 3).unwrap()).unwrap();
        assert_eq!(e.shape(), (2, 0));
        assert!(select_features(&x, &FeatureMask::full(4)).is_err());
    }

    #[test]
    fn relevance_grid_cells() {
        let shape = GridShape::new(8, 8, 512);
        let g = relevance_grid(&FeatureMask::new(vec![0], 32768).unwrap(), shape).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        assert_eq!(g.values().iter().sum::<f64>(), 1.0);
        let g = relevance_grid(&FeatureMask::new(vec![512], 32768).unwrap(), shape).unwrap();
        assert_eq!(g.get(0, 1), 1.0);
        let g = relevance_grid(&FeatureMask::full(32768), shape).unwrap();
        assert!(g.values().iter().all(|&v| v == 512.0));
        assert!(relevance_grid(&FeatureMask::full(10), shape).is_err());
    }

    #[test]
    fn mask_text_round_trip() {
        let m = FeatureMask::new(vec![5, 1, 9], 10).unwrap();
        assert_eq!(FeatureMask::from_text(&m.to_text(), None).unwrap(), m);
        assert_eq!(FeatureMask::from_text("1\n5\n9\n", Some(10)).unwrap(), m);
        assert!(FeatureMask::from_text("1\n", None).is_err());
        assert!(FeatureMask::new(vec![10], 10).is_err());
    }

    #[test]
    fn enet_params() {
        let p = ElasticNetParams::new(0.01, 0.5).unwrap();
        assert_eq!(p.l1(), 0.005);
        assert_eq!(p.l2(), 0.005);
        assert!(ElasticNetParams::new(0.01, 1.5).is_err());
        assert!(ElasticNetParams::new(-1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn soft_threshold_odd_and_nonexpansive(z1 in -1e3f64..1e3, z2 in -1e3f64..1e3, t in 0f64..1e2) {
            prop_assert_eq!(soft_threshold(-z1, t), -soft_threshold(z1, t));
            prop_assert!((soft_threshold(z1, t) - soft_threshold(z2, t)).abs() <= (z1 - z2).abs() + 1e-12);
        }

        #[test]
        fn selection_width_equals_mask_len(coefs in proptest::collection::vec(-1f64..1.0, 1..40), rows in 0usize..4) {
            let c = coef(coefs.iter().map(|v| if v.abs() < 0.5 { 0.0 } else { *v }).collect());
            let m = support(&c, DEFAULT_ZERO_TOL);
            let x = Matrix::zeros(rows, coefs.len());
            prop_assert_eq!(select_features(&x, &m).unwrap().n_cols(), m.len());
        }
    }
}
