//! Brute-force k-nearest-neighbors classification.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensorio::{LabelVector, Matrix};

/// Lazy learner: stores the training set verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub train_features: Matrix,
    pub train_labels: LabelVector,
    pub k: usize,
}

pub fn knn_fit(x: &Matrix, y: &LabelVector, k: usize) -> Result<KnnModel> {
    if x.n_rows() != y.len() {
        return Err(Error::contract(format!(
            "knn: {} feature rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if k == 0 || k > y.len() {
        return Err(Error::contract(format!(
            "knn: k must lie in [1, {}], got {k}",
            y.len()
        )));
    }
    Ok(KnnModel {
        train_features: x.clone(),
        train_labels: y.clone(),
        k,
    })
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest-first ordering: by distance, then by training row.
#[inline]
fn closer(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Training-row indices of the `k` nearest neighbors of `q`, nearest first.
pub fn nearest(m: &KnnModel, q: &[f64]) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = m
        .train_features
        .rows()
        .enumerate()
        .map(|(i, r)| (squared_distance(r, q), i))
        .collect();
    if m.k < d.len() {
        d.select_nth_unstable_by(m.k - 1, closer);
        d.truncate(m.k);
    }
    d.sort_unstable_by(closer);
    d.into_iter().map(|(_, i)| i).collect()
}

/// Majority vote among the `k` nearest training rows (squared Euclidean).
/// Distance ties go to the lower training row; vote ties to the smaller
/// label.
pub fn knn_predict(m: &KnnModel, xq: &Matrix) -> Result<LabelVector> {
    if xq.n_cols() != m.train_features.n_cols() {
        return Err(Error::contract(format!(
            "knn: model has {} features, queries have {}",
            m.train_features.n_cols(),
            xq.n_cols()
        )));
    }
    let n_classes = m.train_labels.n_classes();
    let labels = m.train_labels.as_slice();
    let mut votes = vec![0usize; n_classes];
    let out = xq
        .rows()
        .map(|q| {
            votes.iter_mut().for_each(|v| *v = 0);
            for i in nearest(m, q) {
                votes[labels[i]] += 1;
            }
            // max_by_key keeps the last maximum; scan in reverse so the
            // smallest label wins ties
            votes
                .iter()
                .enumerate()
                .rev()
                .max_by_key(|(_, &v)| v)
                .map(|(c, _)| c)
                .expect("at least one class")
        })
        .collect();
    Ok(LabelVector::new(out))
}
