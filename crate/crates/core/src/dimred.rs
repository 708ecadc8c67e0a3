//! PCA and kernel PCA baselines.
//!
//! Both reduce to a symmetric eigendecomposition (via `nalgebra`). PCA uses
//! the d×d covariance when `d ≤ n` and the n×n Gram matrix otherwise, so a
//! handful of very wide rows stays cheap. Every component is sign-fixed so
//! its largest-magnitude entry is positive (first such entry on ties).

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensorio::{self, dot, Matrix};

/// Eigenvalues at or below this are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k×d, orthonormal rows.
    pub components: Matrix,
    /// Population variance along each component, nonincreasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.n_rows()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        tensorio::save_matrix_bin(&Matrix::row_vector(&self.mean), dir.join("mean.spfm"))?;
        tensorio::save_matrix_bin(&self.components, dir.join("components.spfm"))?;
        let var: Vec<String> = self
            .explained_variance
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        let meta = format!(
            "kind pca\nk {}\nexplained_variance {}\n",
            self.k(),
            var.join(",")
        );
        tensorio::save_text(dir.join("meta.txt"), &meta)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta = Meta::load(dir, "pca")?;
        let mean = tensorio::load_matrix_bin(dir.join("mean.spfm"))?.into_values();
        let components = tensorio::load_matrix_bin(dir.join("components.spfm"))?;
        let explained_variance = meta.floats("explained_variance")?;
        if components.n_rows() != explained_variance.len() || components.n_cols() != mean.len() {
            return Err(Error::Format("pca model files disagree on shape".into()));
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance,
        })
    }
}

/// Kernel used by kernel PCA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(−γ‖a − b‖²)`
    Rbf { gamma: f64 },
    /// `aᵀb`. Makes kernel PCA coincide with PCA; meant for testing.
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Linear => dot(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub train_data: Matrix,
    pub kernel: Kernel,
    /// n×k eigenvectors of the centered kernel, each divided by √eigenvalue.
    pub alphas: Matrix,
    pub eigenvalues: Vec<f64>,
    pub kernel_row_means: Vec<f64>,
    pub kernel_grand_mean: f64,
    /// Notes raised while fitting, e.g. truncation of `k`.
    pub warnings: Vec<String>,
}

impl KpcaModel {
    pub fn k(&self) -> usize {
        self.alphas.n_cols()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        tensorio::save_matrix_bin(&self.train_data, dir.join("train_data.spfm"))?;
        tensorio::save_matrix_bin(&self.alphas, dir.join("alphas.spfm"))?;
        let kernel = match self.kernel {
            Kernel::Rbf { gamma } => format!("kernel rbf\ngamma {gamma:?}\n"),
            Kernel::Linear => "kernel linear\n".to_string(),
        };
        let ev: Vec<String> = self.eigenvalues.iter().map(|v| format!("{v:?}")).collect();
        let meta = format!(
            "kind kpca\nk {}\n{kernel}eigenvalues {}\n",
            self.k(),
            ev.join(",")
        );
        tensorio::save_text(dir.join("meta.txt"), &meta)
    }

    /// Kernel centering statistics are recomputed from the stored training
    /// data.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta = Meta::load(dir, "kpca")?;
        let kernel = match meta.get("kernel")? {
            "rbf" => Kernel::Rbf {
                gamma: meta
                    .get("gamma")?
                    .parse()
                    .map_err(|_| Error::Format("bad gamma".into()))?,
            },
            "linear" => Kernel::Linear,
            other => return Err(Error::Format(format!("unknown kernel `{other}`"))),
        };
        let train_data = tensorio::load_matrix_bin(dir.join("train_data.spfm"))?;
        let alphas = tensorio::load_matrix_bin(dir.join("alphas.spfm"))?;
        let eigenvalues = meta.floats("eigenvalues")?;
        if alphas.n_rows() != train_data.n_rows() || alphas.n_cols() != eigenvalues.len() {
            return Err(Error::Format("kpca model files disagree on shape".into()));
        }
        let k = kernel_matrix(&train_data, &train_data, kernel);
        let (kernel_row_means, kernel_grand_mean) = kernel_means(&k);
        Ok(KpcaModel {
            train_data,
            kernel,
            alphas,
            eigenvalues,
            kernel_row_means,
            kernel_grand_mean,
            warnings: Vec::new(),
        })
    }
}

struct Meta(Vec<(String, String)>);

impl Meta {
    fn load(dir: &Path, kind: &str) -> Result<Self> {
        let text = tensorio::load_text(dir.join("meta.txt"))?;
        let pairs = text
            .lines()
            .filter_map(|l| l.split_once(' '))
            .map(|(k, v)| (k.to_string(), v.trim().to_string()))
            .collect();
        let meta = Meta(pairs);
        if meta.get("kind")? != kind {
            return Err(Error::Format(format!(
                "model directory is not a {kind} model"
            )));
        }
        Ok(meta)
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("model metadata lacks `{key}`")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Format(format!("bad number `{s}` in `{key}`")))
            })
            .collect()
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.n_rows(), m.n_cols(), m.values())
}

/// Eigenpairs sorted by descending eigenvalue (ties by original index).
fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; x.n_cols()];
    for r in x.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    let n = x.n_rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for i in 0..c.n_rows() {
        for (v, m) in c.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

/// Extends `basis` (orthonormal rows) by Gram–Schmidt against unit vectors.
fn complete_basis(basis: &mut Vec<Vec<f64>>, d: usize, want: usize) {
    let mut e = 0;
    while basis.len() < want && e < d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= p * bi);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            fix_sign(&mut v);
            basis.push(v);
        }
    }
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::contract(format!(
            "pca needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::contract(format!(
            "pca k must lie in [1, {}], got {k}",
            (n - 1).min(d)
        )));
    }
    let mean = column_means(x);
    let xc = centered(x, &mean);
    let xd = to_dmatrix(&xc);
    let nf = n as f64;

    let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut variance = Vec::with_capacity(k);
    if d <= n {
        let cov = xd.transpose() * &xd / nf;
        let (vals, vecs) = sorted_eigen(cov);
        for c in 0..k {
            let mut v: Vec<f64> = vecs.column(c).iter().copied().collect();
            fix_sign(&mut v);
            comps.push(v);
            variance.push(vals[c].max(0.0));
        }
    } else {
        let gram = &xd * xd.transpose() / nf;
        let (vals, vecs) = sorted_eigen(gram);
        for c in 0..k {
            if vals[c] <= EIGEN_FLOOR {
                break;
            }
            // v = Xcᵀu / √(n·λ)
            let u = vecs.column(c);
            let mut v: Vec<f64> = (xd.transpose() * u)
                .iter()
                .map(|x| x / (nf * vals[c]).sqrt())
                .collect();
            fix_sign(&mut v);
            comps.push(v);
            variance.push(vals[c]);
        }
        let have = comps.len();
        complete_basis(&mut comps, d, k);
        variance.extend(std::iter::repeat_n(0.0, comps.len() - have));
    }
    let components = Matrix::from_rows(&comps)?;
    Ok(PcaModel {
        mean,
        components,
        explained_variance: variance,
    })
}

pub fn pca_transform(x: &Matrix, m: &PcaModel) -> Result<Matrix> {
    if x.n_cols() != m.mean.len() {
        return Err(Error::contract(format!(
            "pca model expects {} columns, got {}",
            m.mean.len(),
            x.n_cols()
        )));
    }
    centered(x, &m.mean).matmul(&m.components.transpose())
}

pub fn pca_inverse(z: &Matrix, m: &PcaModel) -> Result<Matrix> {
    if z.n_cols() != m.k() {
        return Err(Error::contract(format!(
            "pca model has {} components, got {} columns",
            m.k(),
            z.n_cols()
        )));
    }
    let mut x = z.matmul(&m.components)?;
    for i in 0..x.n_rows() {
        for (v, mu) in x.row_mut(i).iter_mut().zip(&m.mean) {
            *v += mu;
        }
    }
    Ok(x)
}

fn kernel_matrix(a: &Matrix, b: &Matrix, kernel: Kernel) -> Matrix {
    let mut k = Matrix::zeros(a.n_rows(), b.n_rows());
    for i in 0..a.n_rows() {
        for j in 0..b.n_rows() {
            k.set(i, j, kernel.eval(a.row(i), b.row(j)));
        }
    }
    k
}

fn kernel_means(k: &Matrix) -> (Vec<f64>, f64) {
    let n = k.n_rows() as f64;
    let rows: Vec<f64> = k.rows().map(|r| r.iter().sum::<f64>() / n).collect();
    let grand = rows.iter().sum::<f64>() / n;
    (rows, grand)
}

/// `K̃ = K − 1ₙK − K1ₙ + 1ₙK1ₙ` using training statistics; for a query block
/// the row means are taken over the query's own kernel row.
fn center_kernel(k: &Matrix, train_row_means: &[f64], grand: f64) -> Matrix {
    let mut out = k.clone();
    for i in 0..out.n_rows() {
        let own = k.row(i).iter().sum::<f64>() / k.n_cols() as f64;
        for (v, cm) in out.row_mut(i).iter_mut().zip(train_row_means) {
            *v = *v - own - cm + grand;
        }
    }
    out
}

/// The double-centered training kernel matrix.
pub fn centered_kernel(x: &Matrix, kernel: Kernel) -> Matrix {
    let k = kernel_matrix(x, x, kernel);
    let (rm, g) = kernel_means(&k);
    center_kernel(&k, &rm, g)
}

pub fn kpca_fit(x: &Matrix, k: usize, kernel: Kernel) -> Result<KpcaModel> {
    let n = x.n_rows();
    if let Kernel::Rbf { gamma } = kernel {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::contract(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
    }
    if k == 0 || k > n {
        return Err(Error::contract(format!(
            "kpca k must lie in [1, {n}], got {k}"
        )));
    }
    let km = kernel_matrix(x, x, kernel);
    let (row_means, grand) = kernel_means(&km);
    let kc = center_kernel(&km, &row_means, grand);
    let (vals, vecs) = sorted_eigen(to_dmatrix(&kc));
    let positive = vals.iter().take_while(|&&v| v > EIGEN_FLOOR).count();
    let mut warnings = Vec::new();
    let keep = if k > positive {
        warnings.push(format!(
            "requested {k} components but only {positive} eigenvalues exceed {EIGEN_FLOOR:e}; truncated"
        ));
        positive
    } else {
        k
    };
    let mut alphas = Matrix::zeros(n, keep);
    for c in 0..keep {
        let mut v: Vec<f64> = vecs.column(c).iter().copied().collect();
        fix_sign(&mut v);
        let s = vals[c].sqrt();
        for (i, vi) in v.iter().enumerate() {
            alphas.set(i, c, vi / s);
        }
    }
    Ok(KpcaModel {
        train_data: x.clone(),
        kernel,
        alphas,
        eigenvalues: vals[..keep].to_vec(),
        kernel_row_means: row_means,
        kernel_grand_mean: grand,
        warnings,
    })
}

pub fn kpca_transform(xq: &Matrix, m: &KpcaModel) -> Result<Matrix> {
    if xq.n_cols() != m.train_data.n_cols() {
        return Err(Error::contract(format!(
            "kpca model expects {} columns, got {}",
            m.train_data.n_cols(),
            xq.n_cols()
        )));
    }
    let kq = kernel_matrix(xq, &m.train_data, m.kernel);
    center_kernel(&kq, &m.kernel_row_means, m.kernel_grand_mean).matmul(&m.alphas)
}

/// `1/d`, the default RBF width for `d` features.
pub fn default_gamma(n_features: usize) -> f64 {
    1.0 / n_features.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn diag_points() -> Matrix {
        Matrix::from_rows(&[[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0], [-2.0, -2.0]]).unwrap()
    }

    fn random(seed: u64, n: usize, d: usize) -> Matrix {
        let mut rng = crate::preprocess::rng_from_seed(seed);
        Matrix::new(
            n,
            d,
            (0..n * d)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn diagonal_example() {
        let m = pca_fit(&diag_points(), 1).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((m.components.get(0, 0) - h).abs() < 1e-12);
        assert!((m.components.get(0, 1) - h).abs() < 1e-12);
        assert!((m.explained_variance[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_second_component() {
        // k = 2 exceeds n − 1 = 3? no: min(3, 2) = 2
        let m = pca_fit(&diag_points(), 2).unwrap();
        assert!(m.explained_variance[1].abs() < 1e-12);
        let c = &m.components;
        assert!(dot(c.row(0), c.row(1)).abs() < 1e-12);
    }

    #[test]
    fn k_out_of_range() {
        assert!(pca_fit(&diag_points(), 0).is_err());
        assert!(pca_fit(&diag_points(), 3).is_err());
        assert!(pca_fit(&Matrix::zeros(1, 3), 1).is_err());
    }

    fn orthonormal(c: &Matrix) -> f64 {
        let g = c.matmul(&c.transpose()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.n_rows() {
            for j in 0..g.n_cols() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - want).abs());
            }
        }
        worst
    }

    #[test]
    fn both_routes_orthonormal_and_sorted() {
        for (n, d) in [(30, 6), (6, 30)] {
            let x = random(n as u64, n, d);
            let m = pca_fit(&x, (n - 1).min(d)).unwrap();
            assert!(orthonormal(&m.components) < 1e-8, "{n}x{d}");
            for w in m.explained_variance.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // same data, both shapes via a transpose-free trick: d ≤ n vs d > n
        // are compared through projection variances
        let x = random(5, 8, 12);
        let m = pca_fit(&x, 7).unwrap();
        let z = pca_transform(&x, &m).unwrap();
        for c in 0..7 {
            let var: f64 = z.column(c).iter().map(|v| v * v).sum::<f64>() / 8.0;
            assert!((var - m.explained_variance[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn transform_mean_is_zero_and_round_trip() {
        let x = random(9, 20, 5);
        let m = pca_fit(&x, 5).unwrap();
        let z = pca_transform(&Matrix::row_vector(&m.mean), &m).unwrap();
        assert!(z.values().iter().all(|v| v.abs() < 1e-12));
        let back = pca_inverse(&pca_transform(&x, &m).unwrap(), &m).unwrap();
        let err = back
            .values()
            .iter()
            .zip(x.values())
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(err < 1e-8);
        let total: f64 = (0..5)
            .map(|j| {
                let c = x.column(j);
                let mu = c.iter().sum::<f64>() / 20.0;
                c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 20.0
            })
            .sum();
        assert!((m.explained_variance.iter().sum::<f64>() - total).abs() < 1e-8);
        assert!(pca_transform(&Matrix::zeros(1, 4), &m).is_err());
    }

    #[test]
    fn rbf_self_similarity_and_centering() {
        let k = Kernel::Rbf { gamma: 0.3 };
        let x = random(2, 10, 4);
        assert_eq!(k.eval(x.row(3), x.row(3)), 1.0);
        let kc = centered_kernel(&x, k);
        for r in kc.rows() {
            assert!(r.iter().sum::<f64>().abs() < 1e-8);
        }
    }

    #[test]
    fn linear_kpca_matches_pca() {
        let x = random(4, 15, 6);
        let p = pca_fit(&x, 4).unwrap();
        let kp = kpca_fit(&x, 4, Kernel::Linear).unwrap();
        let zp = pca_transform(&x, &p).unwrap();
        let zk = kpca_transform(&x, &kp).unwrap();
        for c in 0..4 {
            let a = zp.column(c);
            let b = zk.column(c);
            let same = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            let flip = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |m, (u, v)| m.max((u + v).abs()));
            assert!(same.min(flip) < 1e-6, "component {c}");
        }
    }

    #[test]
    fn kpca_truncates_with_warning() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let m = kpca_fit(&x, 3, Kernel::Linear).unwrap();
        assert_eq!(m.k(), 1);
        assert_eq!(m.warnings.len(), 1);
        assert!(kpca_fit(&x, 0, Kernel::Linear).is_err());
        assert!(kpca_fit(&x, 1, Kernel::Rbf { gamma: 0.0 }).is_err());
    }

    #[test]
    fn model_dirs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = random(8, 12, 3);
        let p = pca_fit(&x, 2).unwrap();
        p.save(dir.path().join("pca")).unwrap();
        assert_eq!(PcaModel::load(dir.path().join("pca")).unwrap(), p);
        let kp = kpca_fit(&x, 3, Kernel::Rbf { gamma: 0.5 }).unwrap();
        kp.save(dir.path().join("kpca")).unwrap();
        let back = KpcaModel::load(dir.path().join("kpca")).unwrap();
        assert_eq!(
            kpca_transform(&x, &back).unwrap(),
            kpca_transform(&x, &kp).unwrap()
        );
        assert!(PcaModel::load(dir.path().join("kpca")).is_err());
    }
}
