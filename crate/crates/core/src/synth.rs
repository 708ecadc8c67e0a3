//! Seeded synthetic data: a sparse linear model with Gaussian features,
//! optionally thresholded into binary labels.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{rng_from_seed, Dataset};
use crate::tensorio::{LabelVector, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Fraction of rows labeled 1 (rows with the largest responses).
    pub positive_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_samples: 200,
            n_features: 20,
            n_informative: 5,
            noise: 0.01,
            positive_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: Matrix,
    /// Continuous response `Xβ + ε`.
    pub targets: Vec<f64>,
    pub labels: LabelVector,
    pub true_coef: Vec<f64>,
}

impl SyntheticData {
    /// Sorted indices of the nonzero true coefficients.
    pub fn true_support(&self) -> Vec<usize> {
        self.true_coef
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn dataset(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Features are i.i.d. N(0, 1); the informative coefficients sit at random
/// positions with magnitudes in [1, 2] and random signs. The top
/// `positive_fraction` of responses get label 1.
pub fn generate(spec: &SynthSpec) -> Result<SyntheticData> {
    let SynthSpec {
        n_samples: n,
        n_features: d,
        n_informative: s,
        noise,
        positive_fraction,
        seed,
    } = *spec;
    if n == 0 || d == 0 {
        return Err(Error::contract(
            "synthetic data needs n_samples, n_features >= 1",
        ));
    }
    if s > d {
        return Err(Error::contract(format!(
            "n_informative ({s}) exceeds n_features ({d})"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::contract(format!("noise must be >= 0, got {noise}")));
    }
    if !(positive_fraction > 0.0 && positive_fraction < 1.0) {
        return Err(Error::contract(format!(
            "positive_fraction must lie in (0, 1), got {positive_fraction}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let values: Vec<f64> = (0..n * d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let features = Matrix::new(n, d, values)?;

    let mut true_coef = vec![0.0; d];
    let mut support = index::sample(&mut rng, d, s).into_vec();
    support.sort_unstable();
    for j in support {
        let mag: f64 = rng.random_range(1.0..2.0);
        true_coef[j] = if rng.random_bool(0.5) { mag } else { -mag };
    }

    let eps = Normal::new(0.0, noise).map_err(|e| Error::contract(e.to_string()))?;
    let targets: Vec<f64> = features
        .matvec(&true_coef)?
        .into_iter()
        .map(|v| v + eps.sample(&mut rng))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| targets[b].total_cmp(&targets[a]).then(a.cmp(&b)));
    let n_pos = ((n as f64) * positive_fraction)
        .round()
        .clamp(1.0, (n - 1).max(1) as f64) as usize;
    let mut labels = vec![0; n];
    for &i in &order[..n_pos.min(n)] {
        labels[i] = 1;
    }

    Ok(SyntheticData {
        features,
        targets,
        labels: LabelVector::new(labels),
        true_coef,
    })
}
