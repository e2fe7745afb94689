mod common;

use std::cell::Cell;
use std::collections::HashSet;

use common::{data_path, Quadratic};
use gols::analysis::{detect_local_min, detect_snngpp, estimate_pdf, scan_line, uniform_grid};
use gols::data::{split_2_1_1, standardize, BatchMode, BatchSampler, Dataset};
use gols::harness::{emit_outputs, run_repeated, ExperimentConfig, ExperimentData};
use gols::linesearch::{FnLine, LineFunction};
use gols::model::{Activation, OutputHead, Sample};
use gols::numeric::uniform_init;
use gols::{golsi, GolsiParams, MlpSpec, Optimizer, OptimizerKind, OptimizerState, SeededRng, StepRule, Vector};
use proptest::prelude::*;

fn random_dataset(m: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let samples = (0..m)
        .map(|i| {
            let f: Vec<f64> = (0..3).map(|_| 10.0 * rng.unit() - 3.0).collect();
            Sample::new(f.into(), i % 2, 2).unwrap()
        })
        .collect();
    Dataset::new("random", samples, 3, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_disjoint_and_exhaustive(m in 4usize..400, seed in any::<u64>()) {
        let ds = random_dataset(m, 1);
        let split = split_2_1_1(&ds, &mut SeededRng::new(seed)).unwrap();
        let mut all: Vec<usize> = split.train.iter().chain(&split.validation).chain(&split.test).copied().collect();
        prop_assert_eq!(all.len(), m);
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        prop_assert_eq!(split.validation.len(), m / 4);
        prop_assert_eq!(split.test.len(), m / 4);
    }

    #[test]
    fn epoch_shuffle_emits_each_index_once_per_epoch(pool in 1usize..60, bs_frac in 0.05f64..1.0, seed in any::<u64>()) {
        let bs = ((pool as f64 * bs_frac).ceil() as usize).clamp(1, pool);
        let indices: Vec<usize> = (100..100 + pool).collect();
        let mut s = BatchSampler::new(BatchMode::DynamicEpochShuffle, bs, indices.clone(), SeededRng::new(seed)).unwrap();
        let mut stream = Vec::new();
        while stream.len() < 3 * pool {
            stream.extend(s.next_batch().indices);
        }
        for epoch in stream.chunks(pool).take(3) {
            let mut e = epoch.to_vec();
            e.sort_unstable();
            prop_assert_eq!(&e, &indices);
        }
    }

    #[test]
    fn standardization_ignores_held_out_rows(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let ds = random_dataset(40, seed);
        let split = split_2_1_1(&ds, &mut SeededRng::new(seed)).unwrap();
        let held: HashSet<usize> = split.validation.iter().chain(&split.test).copied().collect();
        let perturbed: Vec<Sample> = ds
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if held.contains(&i) {
                    let f = s.features().map(|v| v * 3.0 + shift);
                    Sample::new(f, s.class(), 2).unwrap()
                } else {
                    s.clone()
                }
            })
            .collect();
        let other = Dataset::new("perturbed", perturbed, 3, 2).unwrap();
        let a = standardize(&ds, &split.train).unwrap();
        let b = standardize(&other, &split.train).unwrap();
        for &i in &split.train {
            prop_assert_eq!(a.samples()[i].features(), b.samples()[i].features());
        }
    }

    #[test]
    fn loss_and_gradient_ignore_batch_order(seed in any::<u64>(), rot in 0usize..7, layers in 1usize..4) {
        let spec = MlpSpec::uniform(3, 4, layers, 2, Activation::Tanh, OutputHead::SoftmaxCrossEntropy).unwrap();
        let mut rng = SeededRng::new(seed);
        let x = uniform_init(&mut rng, spec.parameter_count(), -1.0, 1.0).unwrap();
        let ds = random_dataset(7, seed ^ 0x55);
        let mut order: Vec<&Sample> = ds.samples().iter().collect();
        let a = spec.backprop_gradient(&x, order.iter().copied()).unwrap();
        let again = spec.backprop_gradient(&x, order.iter().copied()).unwrap();
        prop_assert_eq!(a.loss.to_bits(), again.loss.to_bits());
        order.rotate_left(rot);
        order.reverse();
        let b = spec.backprop_gradient(&x, order.iter().copied()).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss.abs().max(1.0));
        for i in 0..x.len() {
            prop_assert!((a.gradient[i] - b.gradient[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluations_match_invocations(log_opt in -6.0f64..5.0, log_a0 in -8.0f64..6.0, reuse in any::<bool>()) {
        let opt = 10f64.powf(log_opt);
        let calls = Cell::new(0u64);
        let mut lf = FnLine::new(1e-7, |a| {
            calls.set(calls.get() + 1);
            (0.5 * (a - opt).powi(2), a - opt)
        });
        let initial = if reuse { Some(-opt) } else { None };
        let r = golsi(&mut lf, 10f64.powf(log_a0), initial, &GolsiParams::default()).unwrap();
        prop_assert_eq!(r.k, calls.get());
        prop_assert_eq!(r.k, lf.evaluations());
        prop_assert_eq!(r.trace.len() as u64, r.k);
    }

    #[test]
    fn single_crossing_gives_single_event(centre in 0.01f64..0.19, curvature in 0.5f64..50.0) {
        let grid = uniform_grid(0.0, 0.002, 101);
        let mut lf = FnLine::new(1.0, |a| (0.5 * curvature * (a - centre).powi(2), curvature * (a - centre)));
        let scan = scan_line(&mut lf, &grid).unwrap();
        prop_assert_eq!(scan.snngpp_events.len(), 1);
        let (lo, hi) = scan.b_eps_support().unwrap();
        prop_assert_eq!(lo, hi);
        prop_assert_eq!(scan.local_min_events.len(), 1);
        prop_assert!((scan.local_min_events[0] as i64 - scan.snngpp_events[0] as i64).abs() <= 1);
    }

    #[test]
    fn pdf_probabilities_sum_to_one(lists in prop::collection::vec(prop::collection::vec(0usize..101, 0..6), 1..40)) {
        let grid = uniform_grid(0.0, 0.002, 101);
        let pdf = estimate_pdf(&lists, &grid).unwrap();
        if pdf.total_events() > 0 {
            let total: f64 = pdf.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        } else {
            prop_assert!(pdf.is_empty());
        }
    }

    #[test]
    fn event_detectors_agree_with_definitions(v in prop::collection::vec(-1.0f64..1.0, 3..60)) {
        let snn = detect_snngpp(&v);
        for i in 1..v.len() {
            prop_assert_eq!(snn.contains(&i), v[i - 1] < 0.0 && v[i] >= 0.0);
        }
        let lmin = detect_local_min(&v);
        for i in 1..v.len() - 1 {
            prop_assert_eq!(lmin.contains(&i), v[i - 1] > v[i] && v[i] < v[i + 1]);
        }
    }
}

fn trajectory(kind: OptimizerKind, history: usize, rule: StepRule) -> Vec<Vector> {
    let mut hyper = gols::optim::Hyper::for_kind(kind);
    hyper.history_size = history;
    let state = OptimizerState::new(kind, hyper, 10).unwrap();
    let mut opt = Optimizer::new(state, rule).unwrap();
    let mut q = Quadratic::ten_dimensional();
    let mut x = Vector::from(vec![0.5; 10]);
    (0..60)
        .map(|_| {
            x = opt.iterate(&x, &mut q).unwrap().0;
            x.clone()
        })
        .collect()
}

#[test]
fn lbfgs_without_memory_is_sgd() {
    for rule in [StepRule::Fixed(0.3), StepRule::Golsi(GolsiParams::default())] {
        assert_eq!(
            trajectory(OptimizerKind::Lbfgs, 0, rule),
            trajectory(OptimizerKind::Sgd, 10, rule)
        );
    }
}

#[test]
fn golsi_lbfgs_converges_on_quadratic() {
    let q = Quadratic::ten_dimensional();
    let path = trajectory(OptimizerKind::Lbfgs, 10, StepRule::Golsi(GolsiParams::default()));
    assert!(q.value(path.last().unwrap().as_slice()) < 1e-6 * q.value(&[0.5; 10]));
}

#[test]
fn emitted_bytes_are_reproducible() {
    let path = data_path("iris.manifest");
    let data = ExperimentData::load(&path).unwrap();
    let cfg = ExperimentConfig {
        dataset: path,
        iterations: 120,
        runs: 3,
        optimizer: OptimizerKind::Adam,
        ..ExperimentConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut contents = Vec::new();
    for dir in &dirs {
        let rep = run_repeated(&cfg, &data).unwrap();
        let files = emit_outputs(&[rep], dir.path()).unwrap();
        contents.push(
            files
                .iter()
                .map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap()))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(contents[0], contents[1]);
}
