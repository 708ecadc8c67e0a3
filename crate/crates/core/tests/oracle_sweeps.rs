//! Parameter sweeps that produced the constants frozen in the acceptance
//! suite. Ignored by default; run with
//! `cargo test -p sparsefeat --test oracle_sweeps -- --ignored --nocapture`.

use sparsefeat::pipeline::{self, PipelineConfig, Selector};
use sparsefeat::sparse::{self, SolverConfig};
use sparsefeat::synth::{self, SynthSpec};

#[test]
#[ignore]
fn sparse_recovery_lambda_sweep() {
    let cfg = SolverConfig::default()
        .with_tol(1e-10)
        .with_max_iter(100_000);
    for seed in 0..4 {
        let data = synth::generate(&SynthSpec {
            n_samples: 100,
            n_features: 500,
            n_informative: 10,
            noise: 0.01,
            positive_fraction: 0.5,
            seed,
        })
        .unwrap();
        let truth = data.true_support();
        let mut exact = Vec::new();
        for i in 0..60 {
            let lambda = 10f64.powf(-3.0 + i as f64 * 0.05);
            let c = sparse::lasso_cd(&data.features, &data.targets, lambda, &cfg).unwrap();
            let s = c.support(1e-12);
            if s.selected() == truth.as_slice() {
                exact.push(lambda);
            }
        }
        println!(
            "seed {seed}: exact recovery for lambda in {:?}",
            exact.first().zip(exact.last())
        );
    }
}

#[test]
#[ignore]
fn end_to_end_lambda_sweep() {
    for (n, seed) in [(1000, 0), (1000, 1), (2000, 0)] {
        let data = synth::generate(&SynthSpec {
            n_samples: n,
            n_features: 2048,
            n_informative: 100,
            noise: 0.01,
            positive_fraction: 0.5,
            seed,
        })
        .unwrap()
        .dataset();
        let cfg = |selector| {
            PipelineConfig::from_json(&format!(
                r#"{{"features": "-", "labels": "-", "seed": {seed}, "selector": {}}}"#,
                serde_json::to_string(&selector).unwrap()
            ))
            .unwrap()
        };
        let base = pipeline::run_on_dataset(&data, &cfg(Selector::None)).unwrap();
        let base_acc = base.report.evaluation.unwrap().accuracy;
        println!("n {n}, seed {seed}: baseline accuracy {base_acc:.4}");
        for lambda in [0.001, 0.003, 0.01, 0.02, 0.03, 0.05] {
            match pipeline::run_on_dataset(&data, &cfg(Selector::Lasso { lambda })) {
                Ok(o) => println!(
                    "  lambda {lambda}: accuracy {:.4}, selected {}",
                    o.report.evaluation.unwrap().accuracy,
                    o.report.selected_features
                ),
                Err(e) => println!("  lambda {lambda}: {e}"),
            }
        }
    }
}
