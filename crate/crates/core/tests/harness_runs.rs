mod common;

use common::data_path;
use gols::harness::{run_repeated, run_training, ExperimentConfig, ExperimentData, StepChoice};
use gols::linesearch::FixedRegime;

fn iris() -> (ExperimentConfig, ExperimentData) {
    let path = data_path("iris.manifest");
    let data = ExperimentData::load(&path).unwrap();
    (
        ExperimentConfig {
            dataset: path,
            ..ExperimentConfig::default()
        },
        data,
    )
}

#[test]
fn iris_golsi_sgd_full_run() {
    let (cfg, data) = iris();
    let a = run_training(&cfg, &data, 0).unwrap();
    assert_eq!(a.records.len(), 3000);
    assert!((1.0..=4.0).contains(&a.summary.mean_k), "mean k {}", a.summary.mean_k);
    assert!(a.summary.final_losses.train < a.initial.train);
    assert_eq!(a.audited_evaluations, *a.cumulative_k.last().unwrap());
    let b = run_training(&cfg, &data, 0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn large_fixed_step_is_not_better_than_medium() {
    let (base, data) = iris();
    let final_loss = |regime| {
        let cfg = ExperimentConfig {
            step: StepChoice::Fixed(regime),
            ..base.clone()
        };
        run_repeated(&cfg, &data).unwrap().mean_final_train()
    };
    let medium = final_loss(FixedRegime::Medium);
    let large = final_loss(FixedRegime::Large);
    assert!(large >= medium || !large.is_finite(), "large {large}, medium {medium}");
}

#[test]
fn step_sizes_span_orders_of_magnitude() {
    let (cfg, data) = iris();
    let log = run_training(&cfg, &data, 3).unwrap();
    let alphas: Vec<f64> = log.records.iter().map(|r| r.alpha).filter(|a| *a > 0.0).collect();
    let lo = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = alphas.iter().cloned().fold(0.0, f64::max);
    assert!(lo < 1e-6 && hi > 1.0, "alpha range [{lo}, {hi}]");
}
