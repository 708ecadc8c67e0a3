//! Command-line front end. `run` drives the whole pipeline from a JSON
//! config; every other subcommand wraps a single library operation and
//! reads/writes the on-disk formats so steps can be chained by hand.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dimred::{self, Kernel, KpcaModel, PcaModel};
use crate::error::{Error, Result};
use crate::metrics;
use crate::neighbors;
use crate::pipeline::{self, PipelineConfig, OUT_DIR_ENV};
use crate::preprocess::{self, Dataset, SplitSpec, StandardizationStats};
use crate::sparse::{
    self, CoefficientVector, ElasticNetParams, FeatureMask, GridShape, ScaleMode, SolverConfig,
    StepPolicy,
};
use crate::synth::{self, SynthSpec};
use crate::tensorio::{self, LabelVector, Matrix};

const RUN_ABOUT: &str = "\
Run the full pipeline described by a JSON config.

Stages: load -> labels -> split -> over-sample (train only) -> standardize
(fit on train) -> select/reduce -> KNN -> metrics.

Config fields (defaults in brackets):
  features          feature matrix path; .csv = headerless CSV, else SPFM
  labels            label file, one integer per line
  annotations       {\"manifest\": path, \"dir\": path} instead of labels;
                    a missing annotation file means label 0
  seed              [0]
  split             {\"train_fraction\": [0.8], \"stratified\": [true]}
  oversample        [true]
  epsilon           standardizer std floor [1e-12]
  selector          one of
                      {\"kind\": \"lasso\", \"lambda\": f}
                      {\"kind\": \"enet\", \"alpha\": f, \"l1_ratio\": f}
                      {\"kind\": \"pgd\", \"lambda\": f, \"algo\": [\"ista\"]|\"fista\"}
                      {\"kind\": \"pca\", \"k\": n}
                      {\"kind\": \"kpca\", \"k\": n, \"gamma\": [1/d]}
                      {\"kind\": \"none\"}
  solver            {\"tol\": [1e-6], \"max_iter\": [1000],
                     \"scale_mode\": [\"mean\"]|\"sum\",
                     \"step_policy\": [{\"policy\": \"lipschitz\"}]
                       | {\"policy\": \"fixed\", \"t\": f}
                       | {\"policy\": \"backtracking\", \"beta\": f, \"t0\": f}}
                    targets are always centered inside the pipeline
  zero_tol          support threshold on |coef| [1e-12]
  knn_k             [5]
  relevance_shape   {\"height\": n, \"width\": n, \"channels\": n}; writes relevance.csv
  output_dir        [$SPARSEFEAT_OUT_DIR, else ./sparsefeat-out]

Relative paths resolve against the config file's directory. The resolved
config is echoed into report.json.";

#[derive(Debug, Parser)]
#[command(
    name = "sparsefeat",
    version,
    about = "Sparse-modeling feature selection and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(about = "Run the full pipeline from a JSON config", long_about = RUN_ABOUT)]
    Run(RunArgs),
    /// Generate a seeded sparse linear model with thresholded labels.
    Synth(SynthArgs),
    /// Fit (or apply) a per-column standardizer.
    Standardize(StandardizeArgs),
    /// Duplicate minority-class rows until classes balance.
    Oversample(OversampleArgs),
    /// Write train/test row indices.
    Split(SplitArgs),
    /// Lasso by coordinate descent.
    Lasso(LassoArgs),
    /// Elastic Net by coordinate descent.
    Enet(EnetArgs),
    /// Lasso by proximal gradient (ISTA or FISTA).
    Pgd(PgdArgs),
    /// Principal component analysis.
    Pca(PcaArgs),
    /// RBF kernel PCA.
    Kpca(KpcaArgs),
    /// Keep only the columns listed in a mask.
    Select(SelectArgs),
    /// K-nearest-neighbors prediction.
    Knn(KnnArgs),
    /// Confusion matrix and binary metrics.
    Eval(EvalArgs),
    /// Map a feature mask back onto the spatial grid.
    Relevance(RelevanceArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "sparsefeat-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 20)]
    pub n_features: usize,
    #[arg(long, default_value_t = 5)]
    pub n_informative: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub positive_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct StandardizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Apply these statistics instead of fitting new ones.
    #[arg(long, conflicts_with = "stats_out")]
    pub stats: Option<PathBuf>,
    /// Where to save fitted statistics (2 x d SPFM: means, stds).
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    #[arg(long, default_value_t = preprocess::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct OversampleArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_features: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shuffle all rows together instead of per class.
    #[arg(long)]
    pub no_stratify: bool,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Mean,
    Sum,
}

/// Inputs and solver knobs shared by the sparse solvers.
#[derive(Debug, Args)]
pub struct SparseInput {
    #[arg(long)]
    pub features: PathBuf,
    /// Integer labels used as regression targets.
    #[arg(long, required_unless_present = "targets", conflicts_with = "targets")]
    pub labels: Option<PathBuf>,
    /// Real-valued targets as an n x 1 or 1 x n matrix.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Loss scaling: mean = 1/(2m)||y - Xb||^2, sum = 1/2||y - Xb||^2.
    #[arg(long, value_enum, default_value_t = ScaleArg::Mean)]
    pub scale: ScaleArg,
    /// Subtract mean(y) first and report it as the intercept.
    #[arg(long)]
    pub center: bool,
    /// |coef| at or below this is treated as zero in the mask.
    #[arg(long, default_value_t = sparse::DEFAULT_ZERO_TOL)]
    pub zero_tol: f64,
    #[command(flatten)]
    pub out: OutDir,
}

impl SparseInput {
    fn solver(&self) -> SolverConfig {
        SolverConfig::default()
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
            .with_scale(match self.scale {
                ScaleArg::Mean => ScaleMode::Mean,
                ScaleArg::Sum => ScaleMode::Sum,
            })
            .centered(self.center)
    }

    fn load(&self) -> Result<(Matrix, Vec<f64>)> {
        let x = tensorio::load_matrix_auto(&self.features)?;
        let y = match (&self.labels, &self.targets) {
            (Some(l), _) => tensorio::load_labels(l)?.to_targets(),
            (None, Some(t)) => vector_from(&tensorio::load_matrix_auto(t)?)?,
            (None, None) => return Err(Error::contract("need --labels or --targets")),
        };
        Ok((x, y))
    }
}

fn vector_from(m: &Matrix) -> Result<Vec<f64>> {
    if m.n_cols() == 1 || m.n_rows() == 1 {
        Ok(m.values().to_vec())
    } else {
        Err(Error::contract(format!(
            "targets must be a single row or column, got {}x{}",
            m.n_rows(),
            m.n_cols()
        )))
    }
}

#[derive(Debug, Args)]
pub struct LassoArgs {
    #[arg(long)]
    pub lambda: f64,
    #[command(flatten)]
    pub input: SparseInput,
}

#[derive(Debug, Args)]
pub struct EnetArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub l1_ratio: f64,
    #[command(flatten)]
    pub input: SparseInput,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Ista,
    Fista,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StepArg {
    Lipschitz,
    Fixed,
    Backtracking,
}

#[derive(Debug, Args)]
pub struct PgdArgs {
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = AlgoArg::Ista)]
    pub algo: AlgoArg,
    #[arg(long, value_enum, default_value_t = StepArg::Lipschitz)]
    pub step: StepArg,
    /// Step size for `--step fixed`, initial step for `--step backtracking`.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Shrink factor for `--step backtracking`.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[command(flatten)]
    pub input: SparseInput,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Number of components (ignored with --model).
    #[arg(long, required_unless_present = "model")]
    pub k: Option<usize>,
    /// Transform with a saved model instead of fitting.
    #[arg(long, conflicts_with = "model_out")]
    pub model: Option<PathBuf>,
    /// Directory to save the fitted model in.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Projected rows.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct KpcaArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, required_unless_present = "model")]
    pub k: Option<usize>,
    /// RBF width; defaults to 1/d.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, conflicts_with = "model_out")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[arg(long)]
    pub train_features: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Predicted labels, one per line.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelevanceArgs {
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub channels: usize,
    /// height x width CSV of selected-channel counts.
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => run(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Standardize(a) => standardize(a),
        Command::Oversample(a) => oversample(a),
        Command::Split(a) => split(a),
        Command::Lasso(a) => {
            let (x, y) = a.input.load()?;
            let c = sparse::lasso_cd(&x, &y, a.lambda, &a.input.solver())?;
            write_solution(&c, &a.input, false)
        }
        Command::Enet(a) => {
            let (x, y) = a.input.load()?;
            let p = ElasticNetParams::new(a.alpha, a.l1_ratio)?;
            let c = sparse::elastic_net_cd(&x, &y, &p, &a.input.solver())?;
            write_solution(&c, &a.input, false)
        }
        Command::Pgd(a) => pgd(a),
        Command::Pca(a) => pca(a),
        Command::Kpca(a) => kpca(a),
        Command::Select(a) => {
            let x = tensorio::load_matrix_auto(&a.input)?;
            let m = FeatureMask::load(&a.mask, Some(x.n_cols()))?;
            save_matrix(&sparse::select_features(&x, &m)?, &a.output)
        }
        Command::Knn(a) => {
            let x = tensorio::load_matrix_auto(&a.train_features)?;
            let y = tensorio::load_labels(&a.train_labels)?;
            let q = tensorio::load_matrix_auto(&a.query)?;
            let model = neighbors::knn_fit(&x, &y, a.k)?;
            tensorio::save_labels(&neighbors::knn_predict(&model, &q)?, &a.output)
        }
        Command::Eval(a) => eval(a),
        Command::Relevance(a) => {
            let m = FeatureMask::load(&a.mask, None)?;
            let g = sparse::relevance_grid(&m, GridShape::new(a.height, a.width, a.channels))?;
            tensorio::save_matrix_csv(&g, &a.output)
        }
    }
}

/// CSV when the extension says so, SPFM (f64) otherwise.
fn save_matrix(m: &Matrix, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("txt") => tensorio::save_matrix_csv(m, path),
        _ => tensorio::save_matrix_bin(m, path),
    }
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if a.out_dir.is_some() {
        cfg.output_dir = a.out_dir;
    }
    let report = pipeline::run_pipeline(&cfg)?;
    let dir = report.config.output_dir.clone().unwrap_or_default();
    let e = report.evaluation.expect("pipeline always evaluates");
    println!(
        "selected {} of {} features; accuracy {:.4}, f1 {:.4}; report in {}",
        report.selected_features,
        report.input_features,
        e.accuracy,
        e.f1,
        dir.join("report.json").display()
    );
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let data = synth::generate(&SynthSpec {
        n_samples: a.n_samples,
        n_features: a.n_features,
        n_informative: a.n_informative,
        noise: a.noise,
        positive_fraction: a.positive_fraction,
        seed: a.seed,
    })?;
    let dir = &a.out.out_dir;
    tensorio::save_matrix_bin(&data.features, dir.join("features.spfm"))?;
    tensorio::save_labels(&data.labels, dir.join("labels.txt"))?;
    tensorio::save_matrix_csv(
        &Matrix::column_vector(&data.targets),
        dir.join("targets.csv"),
    )?;
    tensorio::save_matrix_csv(
        &Matrix::row_vector(&data.true_coef),
        dir.join("true_coef.csv"),
    )?;
    FeatureMask::new(data.true_support(), a.n_features)?.save(dir.join("true_support.txt"))
}

fn standardize(a: StandardizeArgs) -> Result<()> {
    let x = tensorio::load_matrix_auto(&a.input)?;
    let stats = match &a.stats {
        Some(p) => StandardizationStats::from_matrix(&tensorio::load_matrix_auto(p)?, a.epsilon)?,
        None => preprocess::fit_standardizer(&x, a.epsilon)?,
    };
    save_matrix(&preprocess::apply_standardizer(&x, &stats)?, &a.output)?;
    if let Some(p) = &a.stats_out {
        tensorio::save_matrix_bin(&stats.to_matrix(), p)?;
    }
    Ok(())
}

fn oversample(a: OversampleArgs) -> Result<()> {
    let d = Dataset::new(
        tensorio::load_matrix_auto(&a.features)?,
        tensorio::load_labels(&a.labels)?,
    )?;
    let o = preprocess::random_oversample(&d, a.seed)?;
    save_matrix(&o.features, &a.out_features)?;
    tensorio::save_labels(&o.labels, &a.out_labels)
}

fn split(a: SplitArgs) -> Result<()> {
    let labels = tensorio::load_labels(&a.labels)?;
    let s = preprocess::split_indices(
        &labels,
        &SplitSpec {
            train_fraction: a.train_fraction,
            seed: a.seed,
            stratified: !a.no_stratify,
        },
    )?;
    // row indices share the label-file format: one integer per line
    tensorio::save_labels(&LabelVector::new(s.train), &a.train_out)?;
    tensorio::save_labels(&LabelVector::new(s.test), &a.test_out)
}

fn write_solution(c: &CoefficientVector, input: &SparseInput, history: bool) -> Result<()> {
    let dir = &input.out.out_dir;
    tensorio::save_matrix_bin(&c.to_matrix(), dir.join("coef.spfm"))?;
    c.support(input.zero_tol).save(dir.join("mask.txt"))?;
    if history {
        tensorio::save_text(
            dir.join("objective_history.csv"),
            &pipeline::objective_history_csv(c),
        )?;
    }
    eprintln!(
        "{} of {} coefficients nonzero after {} iterations (converged: {}), objective {:e}",
        c.support(input.zero_tol).len(),
        c.coef.len(),
        c.iterations,
        c.converged,
        c.final_objective()
    );
    Ok(())
}

fn pgd(a: PgdArgs) -> Result<()> {
    let (x, y) = a.input.load()?;
    let step = match a.step {
        StepArg::Lipschitz => StepPolicy::Lipschitz,
        StepArg::Fixed => StepPolicy::Fixed { t: a.t },
        StepArg::Backtracking => StepPolicy::Backtracking {
            beta: a.beta,
            t0: a.t,
        },
    };
    let cfg = a.input.solver().with_step(step);
    let c = match a.algo {
        AlgoArg::Ista => sparse::ista(&x, &y, a.lambda, &cfg)?,
        AlgoArg::Fista => sparse::fista(&x, &y, a.lambda, &cfg)?,
    };
    write_solution(&c, &a.input, true)
}

fn pca(a: PcaArgs) -> Result<()> {
    let x = tensorio::load_matrix_auto(&a.input)?;
    let model = match (&a.model, a.k) {
        (Some(dir), _) => PcaModel::load(dir)?,
        (None, Some(k)) => dimred::pca_fit(&x, k)?,
        (None, None) => return Err(Error::contract("need --k or --model")),
    };
    if let Some(dir) = &a.model_out {
        model.save(dir)?;
    }
    save_matrix(&dimred::pca_transform(&x, &model)?, &a.output)
}

fn kpca(a: KpcaArgs) -> Result<()> {
    let x = tensorio::load_matrix_auto(&a.input)?;
    let model = match (&a.model, a.k) {
        (Some(dir), _) => KpcaModel::load(dir)?,
        (None, Some(k)) => {
            let gamma = a.gamma.unwrap_or_else(|| dimred::default_gamma(x.n_cols()));
            dimred::kpca_fit(&x, k, Kernel::Rbf { gamma })?
        }
        (None, None) => return Err(Error::contract("need --k or --model")),
    };
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(dir) = &a.model_out {
        model.save(dir)?;
    }
    save_matrix(&dimred::kpca_transform(&x, &model)?, &a.output)
}

fn eval(a: EvalArgs) -> Result<()> {
    let truth = tensorio::load_labels(&a.truth)?;
    let pred = tensorio::load_labels(&a.pred)?;
    let json = serde_json::to_string_pretty(&metrics::evaluate(&truth, &pred)?)
        .expect("evaluation serializes");
    if let Some(p) = &a.output {
        tensorio::save_text(p, &json)?;
    }
    println!("{json}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_go_to_stderr_and_help_does_not() {
        // main_with_args maps stderr errors to exit 1, help/version to 0
        assert!(Cli::try_parse_from(["sparsefeat", "lasso"])
            .unwrap_err()
            .use_stderr());
        assert!(Cli::try_parse_from(["sparsefeat", "frobnicate"])
            .unwrap_err()
            .use_stderr());
        assert!(!Cli::try_parse_from(["sparsefeat", "--help"])
            .unwrap_err()
            .use_stderr());
    }

    #[test]
    fn pgd_step_flags_map_to_policies() {
        let cli = Cli::try_parse_from([
            "sparsefeat",
            "pgd",
            "--lambda",
            "0.1",
            "--algo",
            "fista",
            "--step",
            "backtracking",
            "--t",
            "2",
            "--beta",
            "0.3",
            "--features",
            "x.spfm",
            "--labels",
            "y.txt",
            "--out-dir",
            "o",
        ])
        .unwrap();
        let Command::Pgd(a) = cli.command else {
            panic!()
        };
        assert!(matches!(a.algo, AlgoArg::Fista));
        assert!(matches!(a.step, StepArg::Backtracking));
        assert_eq!((a.t, a.beta), (2.0, 0.3));
    }
}
