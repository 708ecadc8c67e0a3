//! Config-driven pipeline: load → label → split → over-sample (train only)
//! → standardize (fit on train) → select or reduce features → KNN → metrics.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dimred::{self, Kernel};
use crate::error::{Error, Result};
use crate::metrics::{self, Evaluation};
use crate::neighbors;
use crate::preprocess::{self, Dataset, SplitIndices, SplitSpec, StandardizationStats};
use crate::sparse::{
    self, CoefficientVector, ElasticNetParams, FeatureMask, GridShape, SolverConfig,
};
use crate::tensorio::{self, LabelVector, Matrix};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPARSEFEAT_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "sparsefeat-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PgdAlgo {
    #[default]
    Ista,
    Fista,
}

/// Exactly one feature selector or reducer per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Selector {
    Lasso {
        lambda: f64,
    },
    Enet {
        alpha: f64,
        l1_ratio: f64,
    },
    Pgd {
        lambda: f64,
        #[serde(default)]
        algo: PgdAlgo,
    },
    Pca {
        k: usize,
    },
    Kpca {
        k: usize,
        /// Defaults to `1/d`.
        #[serde(default)]
        gamma: Option<f64>,
    },
    None,
}

impl Selector {
    fn is_sparse(&self) -> bool {
        matches!(
            self,
            Selector::Lasso { .. } | Selector::Enet { .. } | Selector::Pgd { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSource {
    /// One image stem per line, in feature-row order.
    pub manifest: PathBuf,
    /// Directory of `<stem>.txt` YOLO files.
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "yes")]
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: default_train_fraction(),
            stratified: true,
        }
    }
}

fn default_train_fraction() -> f64 {
    0.8
}

fn yes() -> bool {
    true
}

fn default_knn_k() -> usize {
    5
}

fn default_zero_tol() -> f64 {
    sparse::DEFAULT_ZERO_TOL
}

fn default_epsilon() -> f64 {
    preprocess::DEFAULT_EPSILON
}

/// A pipeline run, parsed from a single JSON document. Every omitted field
/// takes the default shown by `sparsefeat run --help`, and the resolved
/// config is echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Feature matrix; `.csv` is read as headerless CSV, anything else as SPFM.
    pub features: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub annotations: Option<AnnotationSource>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "yes")]
    pub oversample: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub selector: Selector,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// Feature-map layout; when set, a relevance grid is written.
    #[serde(default)]
    pub relevance_shape: Option<GridShape>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&tensorio::load_text(path)?)?;
        // relative input paths resolve against the config file's directory
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.features);
        if let Some(l) = self.labels.as_mut() {
            fix(l);
        }
        if let Some(a) = self.annotations.as_mut() {
            fix(&mut a.manifest);
            fix(&mut a.dir);
        }
        if let Some(o) = self.output_dir.as_mut() {
            fix(o);
        }
    }

    /// Output directory: the config value, else `$SPARSEFEAT_OUT_DIR`, else
    /// `./sparsefeat-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
        })
    }

    /// Checks value ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        match (&self.labels, &self.annotations) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either `labels` or `annotations`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of `labels` or `annotations` is required".into(),
                ))
            }
            _ => {}
        }
        let mut paths = vec![self.features.as_path()];
        paths.extend(self.labels.as_deref());
        if let Some(a) = &self.annotations {
            paths.push(&a.manifest);
            paths.push(&a.dir);
        }
        for p in paths {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "referenced path does not exist",
                    ),
                ));
            }
        }
        self.validate_values()
    }

    fn validate_values(&self) -> Result<()> {
        self.solver.validate()?;
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(Error::Config("zero_tol must be >= 0".into()));
        }
        match &self.selector {
            Selector::Lasso { lambda } | Selector::Pgd { lambda, .. } if !(*lambda >= 0.0) => {
                Err(Error::Config(format!("lambda must be >= 0, got {lambda}")))
            }
            Selector::Enet { alpha, l1_ratio } => {
                ElasticNetParams::new(*alpha, *l1_ratio).map(|_| ())
            }
            Selector::Pca { k: 0 } | Selector::Kpca { k: 0, .. } => {
                Err(Error::Config("k must be >= 1".into()))
            }
            Selector::Kpca { gamma: Some(g), .. } if !(*g > 0.0) => {
                Err(Error::Config(format!("gamma must be > 0, got {g}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub intercept: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Training rows after over-sampling.
    pub n_train_fit: usize,
    pub input_features: usize,
    pub selected_features: usize,
    pub solver: Option<SolverSummary>,
    pub evaluation: Option<Evaluation>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with timings cleared, for run-to-run comparison.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: Vec::new(),
            ..self.clone()
        }
    }
}

/// Everything fitted during a run, kept in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: RunReport,
    pub split: SplitIndices,
    pub standardization: StandardizationStats,
    pub mask: Option<FeatureMask>,
    pub coefficients: Option<CoefficientVector>,
    pub predictions: LabelVector,
    pub test_labels: LabelVector,
    pub relevance: Option<Matrix>,
}

struct Timer(Vec<StageTiming>);

impl Timer {
    fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        });
        self.0.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }
}

struct Selected {
    train: Matrix,
    test: Matrix,
    mask: Option<FeatureMask>,
    coef: Option<CoefficientVector>,
    warnings: Vec<String>,
}

fn select(cfg: &PipelineConfig, train: &Dataset, test: &Matrix) -> Result<Selected> {
    let x = &train.features;
    let d = x.n_cols();
    let sparse_fit = |coef: CoefficientVector| -> Result<Selected> {
        let mask = coef.support(cfg.zero_tol);
        if mask.is_empty() {
            return Err(Error::contract(format!(
                "empty feature selection: no coefficient exceeds {} (lambda {} too large)",
                cfg.zero_tol, coef.lambda
            )));
        }
        Ok(Selected {
            train: sparse::select_features(x, &mask)?,
            test: sparse::select_features(test, &mask)?,
            mask: Some(mask),
            coef: Some(coef),
            warnings: Vec::new(),
        })
    };
    // class labels as centered real-valued regression targets
    let y = train.labels.to_targets();
    let solver = cfg.solver.centered(true);
    match &cfg.selector {
        Selector::Lasso { lambda } => sparse_fit(sparse::lasso_cd(x, &y, *lambda, &solver)?),
        Selector::Enet { alpha, l1_ratio } => {
            let p = ElasticNetParams::new(*alpha, *l1_ratio)?;
            sparse_fit(sparse::elastic_net_cd(x, &y, &p, &solver)?)
        }
        Selector::Pgd { lambda, algo } => sparse_fit(match algo {
            PgdAlgo::Ista => sparse::ista(x, &y, *lambda, &solver)?,
            PgdAlgo::Fista => sparse::fista(x, &y, *lambda, &solver)?,
        }),
        Selector::Pca { k } => {
            let m = dimred::pca_fit(x, *k)?;
            Ok(Selected {
                train: dimred::pca_transform(x, &m)?,
                test: dimred::pca_transform(test, &m)?,
                mask: None,
                coef: None,
                warnings: Vec::new(),
            })
        }
        Selector::Kpca { k, gamma } => {
            let gamma = gamma.unwrap_or_else(|| dimred::default_gamma(d));
            let m = dimred::kpca_fit(x, *k, Kernel::Rbf { gamma })?;
            Ok(Selected {
                train: dimred::kpca_transform(x, &m)?,
                test: dimred::kpca_transform(test, &m)?,
                mask: None,
                coef: None,
                warnings: m.warnings.clone(),
            })
        }
        Selector::None => Ok(Selected {
            train: x.clone(),
            test: test.clone(),
            mask: Some(FeatureMask::full(d)),
            coef: None,
            warnings: Vec::new(),
        }),
    }
}

/// Runs every in-memory stage on an already-loaded dataset.
pub fn run_on_dataset(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate_values()?;
    let mut timer = Timer(Vec::new());
    let split_spec = SplitSpec {
        train_fraction: cfg.split.train_fraction,
        seed: cfg.seed,
        stratified: cfg.split.stratified,
    };
    let split = timer.stage("split", || {
        preprocess::split_indices(&data.labels, &split_spec)
    })?;
    let train = data.select(&split.train);
    let test = data.select(&split.test);

    let train = if cfg.oversample {
        // independent stream from the split's
        timer.stage("oversample", || {
            preprocess::random_oversample(&train, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)
        })?
    } else {
        train
    };

    let (stats, train, test_x) = timer.stage("standardize", || {
        let stats = preprocess::fit_standardizer(&train.features, cfg.epsilon)?;
        let tr = Dataset::new(
            preprocess::apply_standardizer(&train.features, &stats)?,
            train.labels.clone(),
        )?;
        let te = preprocess::apply_standardizer(&test.features, &stats)?;
        Ok((stats, tr, te))
    })?;

    let sel = timer.stage("select", || select(cfg, &train, &test_x))?;

    let relevance = match (&cfg.relevance_shape, &sel.mask) {
        (Some(shape), Some(mask)) => {
            Some(timer.stage("relevance", || sparse::relevance_grid(mask, *shape))?)
        }
        _ => None,
    };

    let predictions = timer.stage("knn", || {
        let model = neighbors::knn_fit(&sel.train, &train.labels, cfg.knn_k)?;
        neighbors::knn_predict(&model, &sel.test)
    })?;
    let evaluation = timer.stage("evaluate", || metrics::evaluate(&test.labels, &predictions))?;

    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        // echo the settings actually used: targets are always centered here
        config: PipelineConfig {
            solver: cfg.solver.centered(true),
            ..cfg.clone()
        },
        n_samples: data.len(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        n_train_fit: train.len(),
        input_features: data.features.n_cols(),
        selected_features: sel.train.n_cols(),
        solver: sel.coef.as_ref().map(|c| SolverSummary {
            iterations: c.iterations,
            converged: c.converged,
            final_objective: c.final_objective(),
            intercept: c.intercept,
            lambda: c.lambda,
        }),
        evaluation: Some(evaluation),
        warnings: sel.warnings,
        artifacts: Vec::new(),
        timings: timer.0,
    };
    Ok(PipelineOutcome {
        report,
        split,
        standardization: stats,
        mask: if cfg.selector.is_sparse() || matches!(cfg.selector, Selector::None) {
            sel.mask
        } else {
            None
        },
        coefficients: sel.coef,
        predictions,
        test_labels: test.labels,
        relevance,
    })
}

/// Loads features and labels named by the config.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let features = tensorio::load_matrix_auto(&cfg.features)?;
    let labels = match (&cfg.labels, &cfg.annotations) {
        (Some(p), _) => tensorio::load_labels(p)?,
        (None, Some(a)) => preprocess::labels_from_annotations(&a.manifest, &a.dir)?,
        (None, None) => return Err(Error::Config("no label source".into())),
    };
    Dataset::new(features, labels)
}

/// Writes files and remembers them so a failed run can be cleaned up.
struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    fn write(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        f(&path)
    }

    fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn write_artifacts(out: &PipelineOutcome, w: &mut ArtifactWriter) -> Result<RunReport> {
    w.write("stats.spfm", |p| {
        tensorio::save_matrix_bin(&out.standardization.to_matrix(), p)
    })?;
    if let Some(mask) = &out.mask {
        w.write("mask.txt", |p| mask.save(p))?;
    }
    if let Some(c) = &out.coefficients {
        w.write("coef.spfm", |p| {
            tensorio::save_matrix_bin(&c.to_matrix(), p)
        })?;
        w.write("objective_history.csv", |p| {
            tensorio::save_text(p, &objective_history_csv(c))
        })?;
    }
    if let Some(g) = &out.relevance {
        w.write("relevance.csv", |p| tensorio::save_matrix_csv(g, p))?;
    }
    w.write("predictions.txt", |p| {
        tensorio::save_labels(&out.predictions, p)
    })?;
    let mut report = out.report.clone();
    report.artifacts = w.names();
    report.artifacts.push("report.json".into());
    w.write("report.json", |p| tensorio::save_text(p, &report.to_json()))?;
    Ok(report)
}

/// `iteration,objective` rows, starting from iteration 0 (the initial point).
pub fn objective_history_csv(c: &CoefficientVector) -> String {
    let mut s = String::from("iteration,objective\n");
    for (i, v) in c.objective_history.iter().enumerate() {
        s.push_str(&format!("{i},{v:?}\n"));
    }
    s
}

/// Full file-based run: validate, load, run, write artifacts and
/// `report.json` into the output directory. On failure any artifacts
/// written by this run are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    let wrap = |stage: &'static str| {
        move |e: Error| Error::Stage {
            stage,
            source: Box::new(e),
        }
    };
    cfg.validate().map_err(wrap("validate"))?;
    let data = load_dataset(cfg).map_err(wrap("load"))?;
    let mut cfg = cfg.clone();
    let dir = cfg.resolved_output_dir();
    cfg.output_dir = Some(dir.clone());
    let outcome = run_on_dataset(&data, &cfg)?;
    fs::create_dir_all(&dir).map_err(|e| wrap("write")(Error::io(&dir, e)))?;
    let mut writer = ArtifactWriter {
        dir,
        written: Vec::new(),
    };
    match write_artifacts(&outcome, &mut writer) {
        Ok(r) => Ok(r),
        Err(e) => {
            writer.remove_all();
            Err(wrap("write")(e))
        }
    }
}
