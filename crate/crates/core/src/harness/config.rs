use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{parse_key_values, BatchMode};
use crate::error::{Error, Result};
use crate::linesearch::{fixed_step, FixedRegime, GolsiParams};
use crate::model::{Activation, OutputHead};
use crate::optim::{Hyper, OptimizerKind, StepRule};

/// How the learning rate is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepChoice {
    Golsi,
    Fixed(FixedRegime),
    Constant(f64),
}

impl StepChoice {
    pub fn rule(self, kind: OptimizerKind) -> Result<StepRule> {
        Ok(match self {
            StepChoice::Golsi => StepRule::Golsi(GolsiParams::default()),
            StepChoice::Fixed(regime) => StepRule::Fixed(fixed_step(regime, kind)?),
            StepChoice::Constant(a) => StepRule::Fixed(a),
        })
    }
}

impl FromStr for StepChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "golsi" || lower == "gols-i" {
            return Ok(StepChoice::Golsi);
        }
        if let Ok(regime) = lower.parse::<FixedRegime>() {
            return Ok(StepChoice::Fixed(regime));
        }
        match lower.parse::<f64>() {
            Ok(a) if a > 0.0 && a.is_finite() => Ok(StepChoice::Constant(a)),
            _ => Err(Error::InvalidArgument(format!("unknown step rule `{s}`"))),
        }
    }
}

impl fmt::Display for StepChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepChoice::Golsi => f.write_str("golsi"),
            StepChoice::Fixed(r) => write!(f, "{r}"),
            StepChoice::Constant(a) => write!(f, "{a}"),
        }
    }
}

/// Everything that determines a training experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset manifest (or CSV next to a manifest).
    pub dataset: PathBuf,
    pub optimizer: OptimizerKind,
    pub step: StepChoice,
    pub batch_mode: BatchMode,
    pub batch_size: usize,
    pub iterations: usize,
    pub runs: usize,
    pub seed: u64,
    pub hidden_layers: usize,
    /// Units per hidden layer; `None` uses the manifest override or the
    /// hidden-unit heuristic.
    pub hidden_units: Option<usize>,
    pub activation: Activation,
    pub loss: OutputHead,
    pub beta1: Option<f64>,
    pub momentum: Option<f64>,
    pub history_size: Option<usize>,
    pub paper_literal: bool,
    pub standard_bias_correction: bool,
    pub reuse_derivative: bool,
    pub log_every: usize,
    pub halt_on_nan: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            optimizer: OptimizerKind::Sgd,
            step: StepChoice::Golsi,
            batch_mode: BatchMode::DynamicWithReplacement,
            batch_size: 32,
            iterations: 3000,
            runs: 10,
            seed: 0,
            hidden_layers: 1,
            hidden_units: None,
            activation: Activation::Sigmoid,
            loss: OutputHead::SigmoidMse,
            beta1: None,
            momentum: None,
            history_size: None,
            paper_literal: false,
            standard_bias_correction: false,
            reuse_derivative: true,
            log_every: 10,
            halt_on_nan: false,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.batch_mode != BatchMode::Full && self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(1..=6).contains(&self.hidden_layers) {
            return bad(format!("hidden layers must be 1..=6, got {}", self.hidden_layers));
        }
        if self.hidden_units == Some(0) {
            return bad("hidden units must be >= 1".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        if let Some(b) = self.beta1 {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("beta1 must lie in [0, 1), got {b}"));
            }
        }
        self.step.rule(self.optimizer)?;
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        let mut h = Hyper::for_kind(self.optimizer);
        if let Some(b) = self.beta1 {
            h.beta1 = b;
        }
        if let Some(m) = self.momentum {
            h.momentum = m;
        }
        if let Some(n) = self.history_size {
            h.history_size = n;
        }
        h.paper_literal = self.paper_literal;
        h.standard_bias_correction = self.standard_bias_correction;
        h
    }

    /// File-name friendly identifier, e.g. `iris_sgd_golsi`.
    pub fn label(&self) -> String {
        let stem = self
            .dataset
            .file_stem()
            .map(|s| s.to_string_lossy().to_lowercase())
            .unwrap_or_else(|| "data".into());
        let mut label = format!("{stem}_{}_{}", self.optimizer, self.step);
        if let Some(b) = self.beta1 {
            label.push_str(&format!("_b{b}"));
        }
        if self.hidden_layers != 1 {
            label.push_str(&format!("_l{}", self.hidden_layers));
        }
        label
    }

    /// Applies `key = value` settings; keys are the long CLI flag names.
    pub fn apply_key_values(&mut self, kv: &HashMap<String, String>) -> Result<()> {
        for (key, value) in kv {
            self.apply(key, value)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_err = || Error::Config(format!("bad value `{value}` for `{key}`"));
        fn num<T: FromStr>(v: &str, e: impl Fn() -> Error) -> Result<T> {
            v.parse().map_err(|_| e())
        }
        fn flag(v: &str, e: impl Fn() -> Error) -> Result<bool> {
            match v.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(e()),
            }
        }
        match key.trim_start_matches("--").replace('_', "-").as_str() {
            "dataset" => self.dataset = PathBuf::from(value),
            "optimizer" => self.optimizer = value.parse()?,
            "step" => self.step = value.parse()?,
            "batch-mode" => self.batch_mode = value.parse()?,
            "batch" => self.batch_size = num(value, parse_err)?,
            "iters" => self.iterations = num(value, parse_err)?,
            "runs" => self.runs = num(value, parse_err)?,
            "seed" => self.seed = num(value, parse_err)?,
            "hidden-layers" => self.hidden_layers = num(value, parse_err)?,
            "hidden-units" => self.hidden_units = Some(num(value, parse_err)?),
            "activation" => self.activation = value.parse()?,
            "loss" => self.loss = value.parse()?,
            "beta1" => self.beta1 = Some(num(value, parse_err)?),
            "momentum" => self.momentum = Some(num(value, parse_err)?),
            "history" => self.history_size = Some(num(value, parse_err)?),
            "paper-literal" => self.paper_literal = flag(value, parse_err)?,
            "standard-bias-correction" => self.standard_bias_correction = flag(value, parse_err)?,
            "fresh-derivative" => self.reuse_derivative = !flag(value, parse_err)?,
            "log-every" => self.log_every = num(value, parse_err)?,
            "halt-on-nan" => self.halt_on_nan = flag(value, parse_err)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let kv = parse_key_values(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_key_values(&kv)?;
        Ok(cfg)
    }
}
