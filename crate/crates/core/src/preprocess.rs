//! Standardization, one-hot encoding, random over-sampling, splitting and
//! YOLO-annotation label derivation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{self, LabelVector, Matrix};

/// Default divisor floor for zero-variance columns.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Seeded generator used for every random choice in the crate (ChaCha8).
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature matrix plus one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: LabelVector,
}

impl Dataset {
    pub fn new(features: Matrix, labels: LabelVector) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::contract(format!(
                "dataset has {} feature rows but {} labels",
                features.n_rows(),
                labels.len()
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: self.labels.select(idx),
        }
    }
}

/// Per-column mean and population standard deviation from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub epsilon: f64,
}

impl StandardizationStats {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// Two-row matrix: means, then stds.
    pub fn to_matrix(&self) -> Matrix {
        let mut v = self.means.clone();
        v.extend_from_slice(&self.stds);
        Matrix::new(2, self.means.len(), v).expect("2 x d")
    }

    pub fn from_matrix(m: &Matrix, epsilon: f64) -> Result<Self> {
        if m.n_rows() != 2 {
            return Err(Error::contract(format!(
                "standardization stats need 2 rows (means, stds), got {}",
                m.n_rows()
            )));
        }
        let stds = m.row(1).to_vec();
        if stds.iter().any(|s| *s < 0.0) {
            return Err(Error::Validation("negative standard deviation".into()));
        }
        Ok(StandardizationStats {
            means: m.row(0).to_vec(),
            stds,
            epsilon,
        })
    }
}

pub fn fit_standardizer(x: &Matrix, epsilon: f64) -> Result<StandardizationStats> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::contract(
            "cannot fit standardizer on an empty matrix",
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::contract("epsilon must be positive"));
    }
    let mut means = vec![0.0; d];
    for r in x.rows() {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut vars = vec![0.0; d];
    for r in x.rows() {
        for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
            let c = v - m;
            *s += c * c;
        }
    }
    let stds = vars.into_iter().map(|s| (s / n as f64).sqrt()).collect();
    Ok(StandardizationStats {
        means,
        stds,
        epsilon,
    })
}

pub fn apply_standardizer(x: &Matrix, s: &StandardizationStats) -> Result<Matrix> {
    if x.n_cols() != s.n_features() {
        return Err(Error::contract(format!(
            "matrix has {} columns, standardizer was fit on {}",
            x.n_cols(),
            s.n_features()
        )));
    }
    let scale: Vec<f64> = s.stds.iter().map(|sd| sd.max(s.epsilon)).collect();
    let mut out = x.clone();
    for i in 0..out.n_rows() {
        for ((v, m), sc) in out.row_mut(i).iter_mut().zip(&s.means).zip(&scale) {
            *v = (*v - m) / sc;
        }
    }
    Ok(out)
}

pub fn one_hot(labels: &LabelVector, n_classes: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(labels.len(), n_classes);
    for (i, &l) in labels.as_slice().iter().enumerate() {
        if l >= n_classes {
            return Err(Error::contract(format!(
                "label {l} at row {i} is not below n_classes = {n_classes}"
            )));
        }
        out.set(i, l, 1.0);
    }
    Ok(out)
}

/// Duplicates rows of every minority class, sampled uniformly with
/// replacement, until each present class matches the majority count.
/// Original rows keep their order; duplicates are appended class by class.
pub fn random_oversample(d: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = d.labels.counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::contract(format!(
            "over-sampling needs at least two classes, found {present}"
        )));
    }
    let majority = *counts.iter().max().expect("non-empty");
    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..d.len()).collect();
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 || count == majority {
            continue;
        }
        let members: Vec<usize> = d
            .labels
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        for _ in 0..majority - count {
            idx.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(d.select(&idx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default = "SplitSpec::default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "SplitSpec::default_stratified")]
    pub stratified: bool,
}

impl SplitSpec {
    fn default_fraction() -> f64 {
        0.8
    }

    fn default_stratified() -> bool {
        true
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
        }
    }
}

/// Row indices of a train/test partition, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Computes the partition. Depends only on the labels and the seed, never on
/// feature values.
pub fn split_indices(labels: &LabelVector, spec: &SplitSpec) -> Result<SplitIndices> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::contract(format!("cannot split {n} rows")));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::contract(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); labels.n_classes()];
        for (i, &l) in labels.as_slice().iter().enumerate() {
            g[l].push(i);
        }
        g.into_iter().filter(|v| !v.is_empty()).collect()
    } else {
        vec![(0..n).collect()]
    };
    for mut members in groups {
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * spec.train_fraction).round() as usize;
        test.extend_from_slice(&members[n_train..]);
        members.truncate(n_train);
        train.extend(members);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::contract(format!(
            "train_fraction {} leaves an empty {} set",
            spec.train_fraction,
            if train.is_empty() { "train" } else { "test" }
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn train_test_split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let s = split_indices(&d.labels, spec)?;
    Ok((d.select(&s.train), d.select(&s.test)))
}

/// Binary label from a YOLO annotation file: any box means defective (1),
/// no boxes means defect-free (0).
pub fn derive_label(annotation_text: &str) -> Result<usize> {
    let mut boxes = 0;
    for (idx, line) in annotation_text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                col: None,
                msg: format!("expected `class xc yc w h`, found {} fields", fields.len()),
            });
        }
        fields[0].parse::<usize>().map_err(|_| Error::Parse {
            line: line_no,
            col: Some(1),
            msg: format!("class id `{}` is not a non-negative integer", fields[0]),
        })?;
        for (c, f) in fields.iter().enumerate().skip(1) {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                col: Some(c + 1),
                msg: format!("`{f}` is not a number"),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse {
                    line: line_no,
                    col: Some(c + 1),
                    msg: format!("box coordinate {v} outside [0, 1]"),
                });
            }
        }
        boxes += 1;
    }
    Ok(usize::from(boxes > 0))
}

/// Labels for the image stems listed in `manifest` (one per line), read from
/// `<annotation_dir>/<stem>.txt`. A missing annotation file means no boxes.
pub fn labels_from_annotations(
    manifest: impl AsRef<Path>,
    annotation_dir: impl AsRef<Path>,
) -> Result<LabelVector> {
    let text = tensorio::load_text(manifest.as_ref())?;
    let dir = annotation_dir.as_ref();
    let mut labels = Vec::new();
    for stem in text.lines().map(str::trim).filter(|s| !s.is_empty()) {
        let path = dir.join(format!("{stem}.txt"));
        let label = match std::fs::read_to_string(&path) {
            Ok(t) => derive_label(&t).map_err(|e| match e {
                Error::Parse { line, col, msg } => Error::Parse {
                    line,
                    col,
                    msg: format!("{}: {msg}", path.display()),
                },
                other => other,
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(Error::io(path, e)),
        };
        labels.push(label);
    }
    Ok(LabelVector::new(labels))
}
