//! Training runs, repeated-seed aggregation and experiment output.
//!
//! Run `r` of an experiment uses seed `seed + r`. Each seed feeds three
//! independent ChaCha streams: 0 for the 2:1:1 split, 1 for the initial
//! weights and 2 for mini-batch sampling, so changing the batch regime does
//! not change the split or the starting point.

mod config;
mod output;

pub use config::{ExperimentConfig, StepChoice};
pub use output::{emit_outputs, write_curve_csv, write_envelope_csv, write_scan_outputs, CURVE_HEADER};

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{scan_study, BatchSizeStudy};
use crate::data::{parse_key_values, split_2_1_1, standardize, BatchMode, BatchSampler, Dataset, Manifest, Split};
use crate::error::{Error, Result};
use crate::linesearch::{GradientOracle, Objective};
use crate::model::{hidden_units_heuristic, MlpSpec, OutputHead};
use crate::numeric::{uniform_init, SeededRng, Vector};
use crate::optim::{IterationRecord, Optimizer, OptimizerKind, OptimizerState, StepRule};

const SPLIT_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;

/// Regression constant of the hidden-unit heuristic.
pub const REGRESSION_CONSTANT: f64 = 1.5;

/// A dataset together with its manifest-level network hint.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub dataset: Dataset,
    pub hidden_nodes_override: Option<usize>,
}

impl ExperimentData {
    pub fn new(dataset: Dataset) -> Self {
        ExperimentData {
            dataset,
            hidden_nodes_override: None,
        }
    }

    /// Loads a manifest, or the manifest next to a `.csv` path.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = if path.extension().is_some_and(|e| e == "csv") {
            path.with_extension("manifest")
        } else {
            path.to_path_buf()
        };
        let manifest = Manifest::load(&manifest_path)?;
        Ok(ExperimentData {
            dataset: manifest.load_dataset()?,
            hidden_nodes_override: manifest.hidden_nodes_override,
        })
    }

    /// Hidden units per layer: explicit setting, then manifest override, then
    /// the heuristic.
    pub fn hidden_units(&self, cfg: &ExperimentConfig) -> usize {
        cfg.hidden_units.or(self.hidden_nodes_override).unwrap_or_else(|| {
            hidden_units_heuristic(
                self.dataset.len(),
                self.dataset.inputs(),
                self.dataset.classes(),
                REGRESSION_CONSTANT,
            )
        })
    }

    pub fn network(&self, cfg: &ExperimentConfig) -> Result<MlpSpec> {
        MlpSpec::uniform(
            self.dataset.inputs(),
            self.hidden_units(cfg),
            cfg.hidden_layers,
            self.dataset.classes(),
            cfg.activation,
            cfg.loss,
        )
    }
}

/// Train/validation/test losses at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub final_losses: Losses,
    pub best_train: f64,
    pub mean_k: f64,
    pub total_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub initial: Losses,
    pub records: Vec<IterationRecord>,
    /// Running total of gradient evaluations after each iteration.
    pub cumulative_k: Vec<u64>,
    /// Gradient evaluations counted by the objective itself.
    pub audited_evaluations: u64,
    pub summary: RunSummary,
}

/// A split, standardized dataset and network ready for optimisation.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub spec: MlpSpec,
    pub data: Dataset,
    pub split: Split,
    pub x0: Vector,
}

pub fn prepare_run(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<PreparedRun> {
    let spec = data.network(cfg)?;
    let split = split_2_1_1(&data.dataset, &mut SeededRng::with_stream(seed, SPLIT_STREAM))?;
    let standardized = standardize(&data.dataset, &split.train)?;
    let x0 = uniform_init(
        &mut SeededRng::with_stream(seed, INIT_STREAM),
        spec.parameter_count(),
        -0.1,
        0.1,
    )?;
    Ok(PreparedRun {
        spec,
        data: standardized,
        split,
        x0,
    })
}

fn losses_at(objective: &Objective<'_>, x: &Vector, split: &Split) -> Result<Losses> {
    Ok(Losses {
        train: objective.loss_on(x, &split.train)?,
        validation: objective.loss_on(x, &split.validation)?,
        test: objective.loss_on(x, &split.test)?,
    })
}

/// One full training run.
pub fn run_training(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<RunLog> {
    cfg.validate()?;
    if matches!(cfg.batch_mode, BatchMode::Static | BatchMode::DynamicEpochShuffle) {
        let train = data.dataset.len() - 2 * (data.dataset.len() / 4);
        if cfg.batch_size > train {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {train}-sample training set",
                cfg.batch_size
            )));
        }
    }
    let rule = cfg.step.rule(cfg.optimizer)?;
    let run = prepare_run(cfg, data, seed)?;
    let sampler = BatchSampler::new(
        cfg.batch_mode,
        cfg.batch_size,
        run.split.train.clone(),
        SeededRng::with_stream(seed, SAMPLE_STREAM),
    )?;
    let mut objective = Objective::new(&run.spec, &run.data, sampler);
    let state = OptimizerState::new(cfg.optimizer, cfg.hyper(), run.spec.parameter_count())?;
    let mut optimizer = Optimizer::new(state, rule)?;
    optimizer.reuse_derivative = cfg.reuse_derivative;

    let initial = losses_at(&objective, &run.x0, &run.split)?;
    let mut x = run.x0.clone();
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut cumulative_k = Vec::with_capacity(cfg.iterations);
    let mut total = 0u64;
    let mut carried = initial;
    let mut halted = false;

    for n in 0..cfg.iterations {
        if halted {
            records.push(IterationRecord {
                n,
                alpha: f64::NAN,
                k: 0,
                train_loss: f64::NAN,
                val_loss: f64::NAN,
                test_loss: f64::NAN,
                direction_norm: f64::NAN,
            });
            cumulative_k.push(total);
            continue;
        }
        let (next, outcome) = optimizer.iterate(&x, &mut objective)?;
        x = next;
        total += outcome.k;
        let train = objective.loss_on(&x, &run.split.train)?;
        if (n + 1) % cfg.log_every == 0 || n + 1 == cfg.iterations {
            carried = losses_at(&objective, &x, &run.split)?;
        } else {
            carried.train = train;
        }
        records.push(IterationRecord {
            n,
            alpha: outcome.alpha,
            k: outcome.k,
            train_loss: train,
            val_loss: carried.validation,
            test_loss: carried.test,
            direction_norm: outcome.direction_norm,
        });
        cumulative_k.push(total);
        if cfg.halt_on_nan && !train.is_finite() {
            halted = true;
        }
    }

    let last = records.last().expect("iterations >= 1");
    let summary = RunSummary {
        final_losses: Losses {
            train: last.train_loss,
            validation: last.val_loss,
            test: last.test_loss,
        },
        best_train: records
            .iter()
            .map(|r| r.train_loss)
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min),
        mean_k: total as f64 / cfg.iterations as f64,
        total_evaluations: total,
    };
    Ok(RunLog {
        seed,
        initial,
        records,
        cumulative_k,
        audited_evaluations: objective.evaluations(),
        summary,
    })
}

/// Pointwise mean and min/max envelope of one quantity across runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Band {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Band {
    fn from_columns(columns: &[Vec<f64>]) -> Band {
        let len = columns.first().map_or(0, Vec::len);
        let mut band = Band::default();
        for i in 0..len {
            let vals: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            band.mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
            band.min.push(vals.iter().cloned().fold(f64::INFINITY, f64::min));
            band.max.push(vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        band
    }
}

/// Seed-aggregated curves.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurves {
    pub train: Band,
    pub validation: Band,
    pub test: Band,
    pub log10_alpha: Band,
    pub cumulative_k: Vec<f64>,
    pub alpha: Vec<f64>,
    pub direction_norm: Vec<f64>,
    pub initial_train: f64,
}

pub fn aggregate(logs: &[RunLog]) -> AggregateCurves {
    let col = |f: &dyn Fn(&IterationRecord) -> f64| -> Vec<Vec<f64>> {
        logs.iter().map(|l| l.records.iter().map(f).collect()).collect()
    };
    let mean_of = |cols: Vec<Vec<f64>>| Band::from_columns(&cols).mean;
    AggregateCurves {
        train: Band::from_columns(&col(&|r| r.train_loss)),
        validation: Band::from_columns(&col(&|r| r.val_loss)),
        test: Band::from_columns(&col(&|r| r.test_loss)),
        log10_alpha: Band::from_columns(&col(&|r| r.alpha.log10())),
        cumulative_k: mean_of(
            logs.iter()
                .map(|l| l.cumulative_k.iter().map(|&k| k as f64).collect())
                .collect(),
        ),
        alpha: mean_of(col(&|r| r.alpha)),
        direction_norm: mean_of(col(&|r| r.direction_norm)),
        initial_train: logs.iter().map(|l| l.initial.train).sum::<f64>() / logs.len() as f64,
    }
}

#[derive(Debug, Clone)]
pub struct RepeatedRuns {
    pub config: ExperimentConfig,
    pub logs: Vec<RunLog>,
    pub curves: AggregateCurves,
}

impl RepeatedRuns {
    pub fn mean_final_train(&self) -> f64 {
        *self.curves.train.mean.last().unwrap()
    }

    pub fn mean_k(&self) -> f64 {
        self.logs.iter().map(|l| l.summary.mean_k).sum::<f64>() / self.logs.len() as f64
    }
}

/// Runs seeds `seed .. seed + runs` in parallel and aggregates them.
pub fn run_repeated(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<RepeatedRuns> {
    cfg.validate()?;
    let logs: Vec<RunLog> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| run_training(cfg, data, cfg.seed + r))
        .collect::<Result<_>>()?;
    let curves = aggregate(&logs);
    Ok(RepeatedRuns {
        config: cfg.clone(),
        logs,
        curves,
    })
}

/// Normalisation of the full-batch error whose steepest descent direction a
/// scan follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionScale {
    /// Gradient of the training loss, averaged over samples.
    #[default]
    Mean,
    /// Gradient of the summed error: over samples, and over outputs for
    /// the squared-error head.
    Sum,
}

impl DirectionScale {
    pub fn factor(self, spec: &MlpSpec, pool: usize) -> f64 {
        match (self, spec.head()) {
            (DirectionScale::Mean, _) => 1.0,
            (DirectionScale::Sum, OutputHead::SigmoidMse) => (pool * spec.outputs()) as f64,
            (DirectionScale::Sum, OutputHead::SoftmaxCrossEntropy) => pool as f64,
        }
    }
}

impl std::str::FromStr for DirectionScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(DirectionScale::Mean),
            "sum" => Ok(DirectionScale::Sum),
            _ => Err(Error::InvalidArgument(format!("unknown direction scale `{s}`"))),
        }
    }
}

/// Point and direction for directional scans.
#[derive(Debug, Clone)]
pub struct ScanSetup {
    pub spec: MlpSpec,
    pub data: Dataset,
    pub pool: Vec<usize>,
    pub origin: Vector,
    pub direction: Vector,
}

impl ScanSetup {
    /// Steepest descent direction of the full training error at `origin`.
    pub fn steepest_descent(
        spec: MlpSpec,
        data: Dataset,
        pool: Vec<usize>,
        origin: Vector,
        scale: DirectionScale,
    ) -> Result<Self> {
        let g = spec.backprop_gradient(&origin, data.select(&pool))?.gradient;
        let factor = scale.factor(&spec, pool.len());
        Ok(ScanSetup {
            direction: g.scaled(-factor),
            spec,
            data,
            pool,
            origin,
        })
    }

    /// Split and standardize with `seed`, then take `warmup` full-batch
    /// GOLS-I SGD iterations from the usual initial point.
    pub fn from_warmup(
        cfg: &ExperimentConfig,
        data: &ExperimentData,
        seed: u64,
        warmup: usize,
        scale: DirectionScale,
    ) -> Result<Self> {
        let run = prepare_run(cfg, data, seed)?;
        let mut x = run.x0.clone();
        if warmup > 0 {
            let sampler = BatchSampler::new(BatchMode::Full, 1, run.split.train.clone(), SeededRng::new(seed))?;
            let mut objective = Objective::new(&run.spec, &run.data, sampler);
            let state = OptimizerState::new(OptimizerKind::Sgd, cfg.hyper(), run.spec.parameter_count())?;
            let mut opt = Optimizer::new(state, StepRule::Golsi(Default::default()))?;
            for _ in 0..warmup {
                x = opt.iterate(&x, &mut objective)?.0;
            }
        }
        Self::steepest_descent(run.spec, run.data, run.split.train, x, scale)
    }

    /// As [`ScanSetup::from_warmup`] but starting from given weights.
    pub fn from_weights(
        cfg: &ExperimentConfig,
        data: &ExperimentData,
        seed: u64,
        weights: Vector,
        scale: DirectionScale,
    ) -> Result<Self> {
        let run = prepare_run(cfg, data, seed)?;
        if weights.len() != run.spec.parameter_count() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: run.spec.parameter_count(),
            });
        }
        Self::steepest_descent(run.spec, run.data, run.split.train, weights, scale)
    }

    pub fn study(&self, grid: &[f64], batch_sizes: &[usize], runs: usize, seed: u64) -> Result<Vec<BatchSizeStudy>> {
        scan_study(
            &self.spec,
            &self.data,
            &self.pool,
            &self.origin,
            &self.direction,
            grid,
            batch_sizes,
            runs,
            seed,
        )
    }
}

/// A bundled scan origin: the seed that fixes split and standardization,
/// the weights, and the direction normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub dataset: PathBuf,
    pub seed: u64,
    pub scale: DirectionScale,
    pub weights: Vector,
}

impl ReferencePoint {
    /// The seed's initial point after `warmup` full-batch GOLS-I SGD
    /// iterations.
    pub fn generate(
        cfg: &ExperimentConfig,
        data: &ExperimentData,
        seed: u64,
        warmup: usize,
        scale: DirectionScale,
    ) -> Result<Self> {
        let setup = ScanSetup::from_warmup(cfg, data, seed, warmup, scale)?;
        Ok(ReferencePoint {
            dataset: cfg.dataset.clone(),
            seed,
            scale,
            weights: setup.origin,
        })
    }

    /// Reads a `key = value` file; a relative `dataset` is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kv = parse_key_values(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))?;
        let get = |key: &str| {
            kv.get(key)
                .ok_or_else(|| Error::Config(format!("{}: missing `{key}`", path.display())))
        };
        let bad = |key: &str| Error::Config(format!("{}: bad `{key}`", path.display()));
        let dataset = PathBuf::from(get("dataset")?);
        let dataset = match path.parent() {
            Some(dir) if dataset.is_relative() => dir.join(dataset),
            _ => dataset,
        };
        let weights = get("weights")?
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad("weights")))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferencePoint {
            dataset,
            seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
            scale: get("scale")?.parse()?,
            weights: weights.into(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let weights: Vec<String> = self.weights.iter().map(|w| format!("{w:e}")).collect();
        let dataset = self
            .dataset
            .file_name()
            .map(PathBuf::from)
            .unwrap_or_else(|| self.dataset.clone());
        let scale = match self.scale {
            DirectionScale::Mean => "mean",
            DirectionScale::Sum => "sum",
        };
        let text = format!(
            "dataset = {}\nseed = {}\nscale = {scale}\nweights = {}\n",
            dataset.display(),
            self.seed,
            weights.join(", ")
        );
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn setup(&self, cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ScanSetup> {
        ScanSetup::from_weights(cfg, data, self.seed, self.weights.clone(), self.scale)
    }
}
