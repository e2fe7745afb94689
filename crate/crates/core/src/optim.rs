//! Line-search compatible training algorithms.
//!
//! Every algorithm produces a search direction `d_n` from a mini-batch
//! gradient; a step rule (GOLS-I or a constant) then picks `alpha` and the
//! iterate moves to `x_n + alpha d_n`. The momentum methods (SGDM, NAG) apply
//! their composite update `c_{n+1} = alpha d_n + gamma c_n` after the step
//! size is known.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linesearch::{golsi, ExitReason, GolsiParams, GradientOracle, NetworkLine};
use crate::model::BatchEval;
use crate::numeric::{dot_unchecked, hadamard, hadamard_pow, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Sgdm,
    Nag,
    Adagrad,
    Adadelta,
    Adam,
    Lbfgs,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Sgd,
        OptimizerKind::Sgdm,
        OptimizerKind::Nag,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::Adam,
        OptimizerKind::Lbfgs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Nag => "nag",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Lbfgs => "lbfgs",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    /// Momentum constant for SGDM and NAG.
    pub momentum: f64,
    /// Adadelta decay.
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub history_size: usize,
    /// Use the algorithms exactly as printed: Adadelta with `(beta - 1)`
    /// coefficients and Adam without the negation of its direction.
    pub paper_literal: bool,
    /// Adam bias correction by `1 - beta^t` instead of `1 - beta`.
    pub standard_bias_correction: bool,
}

impl Hyper {
    pub fn for_kind(kind: OptimizerKind) -> Self {
        Hyper {
            momentum: if kind == OptimizerKind::Nag { 0.5 } else { 0.9 },
            beta: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            history_size: 10,
            paper_literal: false,
            standard_bias_correction: false,
        }
    }
}

/// Per-run optimizer buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    hyper: Hyper,
    /// Momentum update term.
    c: Vector,
    /// Squared-gradient accumulator.
    v: Vector,
    /// Adadelta update-magnitude average / Adam first moment.
    m: Vector,
    /// Previous Adadelta direction.
    d_prev: Vector,
    history: VecDeque<(Vector, Vector)>,
    /// L-BFGS: previous iterate and its gradient.
    previous: Option<(Vector, Vector)>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, hyper: Hyper, p: usize) -> Result<Self> {
        if kind == OptimizerKind::Adam && hyper.beta1 >= 1.0 {
            return Err(Error::Domain(format!(
                "Adam bias correction divides by 1 - beta1 = {}",
                1.0 - hyper.beta1
            )));
        }
        Ok(OptimizerState {
            kind,
            hyper,
            c: Vector::zeros(p),
            v: Vector::zeros(p),
            m: Vector::zeros(p),
            d_prev: Vector::filled(p, 1.0),
            history: VecDeque::new(),
            previous: None,
            steps: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn momentum_term(&self) -> &Vector {
        &self.c
    }

    pub fn set_momentum_term(&mut self, c: Vector) {
        assert_eq!(c.len(), self.c.len());
        self.c = c;
    }

    pub fn history(&self) -> impl Iterator<Item = &(Vector, Vector)> {
        self.history.iter()
    }

    #[cfg(test)]
    fn buffers_finite(&self) -> bool {
        self.c.is_finite() && self.v.is_finite() && self.m.is_finite() && self.d_prev.is_finite()
    }

    /// `c_{n+1} = alpha d_n + gamma c_n`; returns the new `c`, which is also
    /// the iterate update.
    pub fn sgdm_update(&mut self, direction: &Vector, alpha: f64) -> Vector {
        let mut next = self.c.scaled(self.hyper.momentum);
        next.axpy(alpha, direction);
        self.c = next.clone();
        next
    }

    /// NAG look-ahead point `x + gamma c`.
    pub fn nag_lookahead(&self, x: &Vector) -> Vector {
        x.add_scaled(self.hyper.momentum, &self.c)
    }

    pub fn adagrad_direction(&mut self, g: &Vector) -> Result<Vector> {
        let c = g.neg();
        self.v = self.v.add_scaled(1.0, &hadamard(&c, &c)?);
        let scale = hadamard_pow(&self.v.map(|x| x + self.hyper.eps), -0.5)?;
        hadamard(&scale, &c)
    }

    pub fn adadelta_direction(&mut self, g: &Vector) -> Result<Vector> {
        let beta = self.hyper.beta;
        let c = g.neg();
        let (keep, mix) = if self.hyper.paper_literal {
            (beta, beta - 1.0)
        } else {
            (beta, 1.0 - beta)
        };
        self.v = hadamard(&c, &c)?.scaled(mix).add_scaled(keep, &self.v);
        self.m = hadamard(&self.d_prev, &self.d_prev)?
            .scaled(mix)
            .add_scaled(keep, &self.m);
        let eps = self.hyper.eps;
        let d = if self.hyper.paper_literal {
            // negative accumulators give NaN here, as the printed rule would
            Vector::from(
                (0..c.len())
                    .map(|i| (self.m[i] + eps).sqrt() / (self.v[i] + eps).sqrt() * c[i])
                    .collect::<Vec<_>>(),
            )
        } else {
            let num = hadamard_pow(&self.m.map(|x| x + eps), 0.5)?;
            let den = hadamard_pow(&self.v.map(|x| x + eps), -0.5)?;
            hadamard(&hadamard(&num, &den)?, &c)?
        };
        self.d_prev = d.clone();
        Ok(d)
    }

    pub fn adam_direction(&mut self, g: &Vector) -> Result<Vector> {
        let Hyper {
            beta1, beta2, eps, ..
        } = self.hyper;
        self.steps += 1;
        let c = g;
        self.m = self.m.scaled(beta1).add_scaled(1.0 - beta1, c);
        self.v = self.v.scaled(beta2).add_scaled(1.0 - beta2, &hadamard(c, c)?);
        let (corr1, corr2) = if self.hyper.standard_bias_correction {
            let t = self.steps as i32;
            (1.0 - beta1.powi(t), 1.0 - beta2.powi(t))
        } else {
            (1.0 - beta1, 1.0 - beta2)
        };
        if corr1 == 0.0 || corr2 == 0.0 {
            return Err(Error::Domain("Adam bias correction by zero".into()));
        }
        let m_hat = self.m.scaled(1.0 / corr1);
        let v_hat = self.v.scaled(1.0 / corr2);
        let denom = hadamard_pow(&hadamard_pow(&v_hat, 0.5)?.map(|x| x + eps), -1.0)?;
        let d = hadamard(&denom, &m_hat)?;
        Ok(if self.hyper.paper_literal { d } else { d.neg() })
    }

    /// Stores `(s, y)` if it has positive curvature; evicts the oldest pair
    /// beyond `history_size`.
    pub fn lbfgs_push_pair(&mut self, s: Vector, y: Vector) -> bool {
        let sy = dot_unchecked(&s, &y);
        if self.hyper.history_size == 0 || !(sy > 1e-10 * s.norm() * y.norm()) {
            return false;
        }
        self.history.push_back((s, y));
        while self.history.len() > self.hyper.history_size {
            self.history.pop_front();
        }
        true
    }

    /// Two-loop recursion `d = -H g`, scaled by `s.y / y.y` of the newest pair.
    pub fn lbfgs_direction(&self, g: &Vector) -> Vector {
        let mut q = g.clone();
        let mut coeffs = Vec::with_capacity(self.history.len());
        for (s, y) in self.history.iter().rev() {
            let rho = 1.0 / dot_unchecked(y, s);
            let a = rho * dot_unchecked(s, &q);
            q.axpy(-a, y);
            coeffs.push((rho, a));
        }
        if let Some((s, y)) = self.history.back() {
            q = q.scaled(dot_unchecked(s, y) / dot_unchecked(y, y));
        }
        for ((s, y), (rho, a)) in self.history.iter().zip(coeffs.into_iter().rev()) {
            let b = rho * dot_unchecked(y, &q);
            q.axpy(a - b, s);
        }
        q.neg()
    }

    /// Direction for the non-momentum kinds (SGDM/NAG use `-g`). For L-BFGS,
    /// `x` is the current iterate and the curvature pair against the previous
    /// iterate is recorded first.
    pub fn direction(&mut self, x: &Vector, g: &Vector) -> Result<Vector> {
        match self.kind {
            OptimizerKind::Sgd | OptimizerKind::Sgdm | OptimizerKind::Nag => Ok(sgd_direction(g)),
            OptimizerKind::Adagrad => self.adagrad_direction(g),
            OptimizerKind::Adadelta => self.adadelta_direction(g),
            OptimizerKind::Adam => self.adam_direction(g),
            OptimizerKind::Lbfgs => {
                if let Some((x_prev, g_prev)) = self.previous.take() {
                    self.lbfgs_push_pair(x.sub(&x_prev), g.sub(&g_prev));
                }
                self.previous = Some((x.clone(), g.clone()));
                Ok(self.lbfgs_direction(g))
            }
        }
    }
}

pub fn sgd_direction(g: &Vector) -> Vector {
    g.neg()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Golsi(GolsiParams),
    Fixed(f64),
}

/// Per-iteration log entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub alpha: f64,
    pub k: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub direction_norm: f64,
}

/// What one call to [`Optimizer::iterate`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub alpha: f64,
    pub k: u64,
    pub direction_norm: f64,
    pub exit: Option<ExitReason>,
    /// Mini-batch loss of the gradient that defined the direction.
    pub batch_loss: f64,
}

/// Algorithm state plus step-rule bookkeeping for one training run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    state: OptimizerState,
    rule: StepRule,
    /// Reuse the gradient of the accepted probe as the next iteration's
    /// gradient and `F'(0)`.
    pub reuse_derivative: bool,
    warm_alpha: f64,
    cached: Option<BatchEval>,
}

impl Optimizer {
    pub fn new(state: OptimizerState, rule: StepRule) -> Result<Self> {
        let warm_alpha = match rule {
            StepRule::Golsi(p) => {
                p.validate()?;
                p.alpha_min
            }
            StepRule::Fixed(a) => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::InvalidArgument(format!("fixed step must be positive, got {a}")));
                }
                a
            }
        };
        Ok(Optimizer {
            state,
            rule,
            reuse_derivative: true,
            warm_alpha,
            cached: None,
        })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    /// One iteration from `x`; returns the next iterate.
    pub fn iterate<O: GradientOracle + ?Sized>(&mut self, x: &Vector, objective: &mut O) -> Result<(Vector, StepOutcome)> {
        if self.state.kind == OptimizerKind::Nag {
            return self.iterate_nag(x, objective);
        }
        let mut k = 0;
        let eval = match self.cached.take() {
            Some(e) => e,
            None => {
                k += 1;
                objective.gradient(x)?
            }
        };
        let g = &eval.gradient;
        if !g.is_finite() {
            return Ok(diverged(x, k, eval.loss));
        }
        let d = self.state.direction(x, g)?;
        let norm = d.norm();
        if !d.is_finite() {
            return Ok(diverged(x, k, eval.loss));
        }

        let (alpha, exit, probes, last) = if d.is_zero() {
            (0.0, None, 0, None)
        } else {
            match self.step_size(objective, x, &d, dot_unchecked(&d, g)) {
                Ok(s) => s,
                Err(Error::NonFiniteDerivative { trace, .. }) => {
                    return Ok(diverged(x, k + trace.len() as u64, eval.loss));
                }
                Err(e) => return Err(e),
            }
        };
        k += probes;

        let next = if self.state.kind == OptimizerKind::Sgdm {
            let c = self.state.sgdm_update(&d, alpha);
            x.add_scaled(1.0, &c)
        } else {
            if self.reuse_derivative {
                self.cached = last;
            }
            x.add_scaled(alpha, &d)
        };
        Ok((
            next,
            StepOutcome {
                alpha,
                k,
                direction_norm: norm,
                exit,
                batch_loss: eval.loss,
            },
        ))
    }

    fn iterate_nag<O: GradientOracle + ?Sized>(&mut self, x: &Vector, objective: &mut O) -> Result<(Vector, StepOutcome)> {
        let look = self.state.nag_lookahead(x);
        let eval = objective.gradient(&look)?;
        let mut k = 1;
        if !eval.gradient.is_finite() {
            return Ok(diverged(x, k, eval.loss));
        }
        let d = sgd_direction(&eval.gradient);
        let norm = d.norm();
        let (alpha, exit, probes, _) = if d.is_zero() {
            (0.0, None, 0, None)
        } else {
            match self.step_size(objective, &look, &d, dot_unchecked(&d, &eval.gradient)) {
                Ok(s) => s,
                Err(Error::NonFiniteDerivative { trace, .. }) => {
                    return Ok(diverged(x, k + trace.len() as u64, eval.loss));
                }
                Err(e) => return Err(e),
            }
        };
        k += probes;
        let c = self.state.sgdm_update(&d, alpha);
        Ok((
            x.add_scaled(1.0, &c),
            StepOutcome {
                alpha,
                k,
                direction_norm: norm,
                exit,
                batch_loss: eval.loss,
            },
        ))
    }

    /// Returns `(alpha, exit, evaluations, last probe)`.
    fn step_size<O: GradientOracle + ?Sized>(
        &mut self,
        objective: &mut O,
        origin: &Vector,
        d: &Vector,
        d0: f64,
    ) -> Result<(f64, Option<ExitReason>, u64, Option<BatchEval>)> {
        match self.rule {
            StepRule::Fixed(a) => Ok((a, None, 0, None)),
            StepRule::Golsi(params) => {
                let mut line = NetworkLine::new(objective, origin, d);
                let r = golsi(&mut line, self.warm_alpha, Some(d0), &params)?;
                self.warm_alpha = r.alpha;
                let last = line
                    .take_last()
                    .filter(|(a, _)| *a == r.alpha)
                    .map(|(_, e)| e);
                Ok((r.alpha, Some(r.exit_reason), r.k, last))
            }
        }
    }
}

fn diverged(x: &Vector, k: u64, batch_loss: f64) -> (Vector, StepOutcome) {
    (
        Vector::filled(x.len(), f64::NAN),
        StepOutcome {
            alpha: f64::NAN,
            k,
            direction_norm: f64::NAN,
            exit: None,
            batch_loss,
        },
    )
}
