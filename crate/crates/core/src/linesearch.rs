//! Univariate restriction of a loss along a search direction and the
//! gradient-only inexact line search (GOLS-I) that brackets sign changes of
//! its directional derivative.
//!
//! GOLS-I never looks at function values. Starting from a warm-start step it
//! grows the step by `eta` while the directional derivative is negative, or
//! shrinks it while the derivative is positive, and stops at the first sign
//! change. A step is accepted immediately when `0 < F'(a0) < |c2 F'(0)|`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::data::{BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::model::{BatchEval, MlpSpec};
use crate::numeric::{dot_unchecked, Vector};
use crate::optim::OptimizerKind;

/// One evaluation of the line function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePoint {
    pub value: f64,
    pub derivative: f64,
}

/// `F(alpha) = L(x + alpha d)` and `F'(alpha) = d . g(x + alpha d)`.
///
/// Every call to [`LineFunction::evaluate`] counts as one gradient
/// evaluation; sub-sampled implementations draw a fresh batch per call.
pub trait LineFunction {
    fn evaluate(&mut self, alpha: f64) -> Result<LinePoint>;

    /// Euclidean norm of the search direction.
    fn direction_norm(&self) -> f64;

    /// Number of evaluations performed so far.
    fn evaluations(&self) -> u64;

    fn directional_derivative(&mut self, alpha: f64) -> Result<f64> {
        Ok(self.evaluate(alpha)?.derivative)
    }
}

/// Line function backed by closures; used for synthetic 1-D problems.
pub struct FnLine<F> {
    f: F,
    norm: f64,
    evaluations: u64,
}

impl<F> FnLine<F>
where
    F: FnMut(f64) -> (f64, f64),
{
    /// `f` returns `(F(alpha), F'(alpha))`.
    pub fn new(norm: f64, f: F) -> Self {
        FnLine {
            f,
            norm,
            evaluations: 0,
        }
    }
}

/// Line function from a derivative alone; `F` is reported as NaN.
pub fn derivative_line(norm: f64, mut fp: impl FnMut(f64) -> f64) -> FnLine<impl FnMut(f64) -> (f64, f64)> {
    FnLine::new(norm, move |a| (f64::NAN, fp(a)))
}

impl<F> LineFunction for FnLine<F>
where
    F: FnMut(f64) -> (f64, f64),
{
    fn evaluate(&mut self, alpha: f64) -> Result<LinePoint> {
        self.evaluations += 1;
        let (value, derivative) = (self.f)(alpha);
        Ok(LinePoint { value, derivative })
    }

    fn direction_norm(&self) -> f64 {
        self.norm
    }

    fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// Source of (possibly sub-sampled) loss and gradient evaluations.
pub trait GradientOracle {
    /// One counted evaluation at `x`.
    fn gradient(&mut self, x: &Vector) -> Result<BatchEval>;

    /// Number of evaluations so far.
    fn evaluations(&self) -> u64;
}

/// Mini-batch loss of a network over a dataset, drawing one batch per gradient
/// evaluation and keeping its own evaluation count.
#[derive(Debug)]
pub struct Objective<'a> {
    spec: &'a MlpSpec,
    data: &'a Dataset,
    sampler: BatchSampler,
    evaluations: u64,
}

impl<'a> Objective<'a> {
    pub fn new(spec: &'a MlpSpec, data: &'a Dataset, sampler: BatchSampler) -> Self {
        Objective {
            spec,
            data,
            sampler,
            evaluations: 0,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        self.spec
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn sampler(&self) -> &BatchSampler {
        &self.sampler
    }

    /// Loss over a fixed index set; not counted as a gradient evaluation.
    pub fn loss_on(&self, x: &Vector, indices: &[usize]) -> Result<f64> {
        self.spec.forward_loss(x, self.data.select(indices))
    }
}

impl GradientOracle for Objective<'_> {
    /// Loss and gradient at `x` on a freshly drawn batch.
    fn gradient(&mut self, x: &Vector) -> Result<BatchEval> {
        let batch = self.sampler.next_batch();
        self.evaluations += 1;
        let mut eval = self.spec.backprop_gradient(x, self.data.select(&batch.indices))?;
        eval.batch_id = batch.id;
        Ok(eval)
    }

    fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// The restriction of a [`GradientOracle`] along `direction` from `origin`.
pub struct NetworkLine<'o, O: ?Sized> {
    objective: &'o mut O,
    origin: &'o Vector,
    direction: &'o Vector,
    norm: f64,
    evaluations: u64,
    last: Option<(f64, BatchEval)>,
}

impl<'o, O: GradientOracle + ?Sized> NetworkLine<'o, O> {
    pub fn new(objective: &'o mut O, origin: &'o Vector, direction: &'o Vector) -> Self {
        assert_eq!(origin.len(), direction.len(), "origin/direction length mismatch");
        NetworkLine {
            norm: direction.norm(),
            objective,
            origin,
            direction,
            evaluations: 0,
            last: None,
        }
    }

    pub fn point(&self, alpha: f64) -> Vector {
        self.origin.add_scaled(alpha, self.direction)
    }

    /// The step and batch evaluation of the most recent probe.
    pub fn take_last(&mut self) -> Option<(f64, BatchEval)> {
        self.last.take()
    }
}

impl<O: GradientOracle + ?Sized> LineFunction for NetworkLine<'_, O> {
    fn evaluate(&mut self, alpha: f64) -> Result<LinePoint> {
        let x = self.point(alpha);
        let eval = self.objective.gradient(&x)?;
        self.evaluations += 1;
        let point = LinePoint {
            value: eval.loss,
            derivative: dot_unchecked(self.direction, &eval.gradient),
        };
        self.last = Some((alpha, eval));
        Ok(point)
    }

    fn direction_norm(&self) -> f64 {
        self.norm
    }

    fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GolsiParams {
    pub eta: f64,
    pub c2: f64,
    pub alpha_min: f64,
    pub alpha_max_cap: f64,
}

impl Default for GolsiParams {
    fn default() -> Self {
        GolsiParams {
            eta: 2.0,
            c2: 0.9,
            alpha_min: 1e-8,
            alpha_max_cap: 1e7,
        }
    }
}

impl GolsiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 1.0) {
            return Err(Error::InvalidArgument(format!("eta must exceed 1, got {}", self.eta)));
        }
        if !(self.c2 > 0.0 && self.c2 < 1.0) {
            return Err(Error::InvalidArgument(format!("c2 must lie in (0, 1), got {}", self.c2)));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max_cap) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < alpha_min < alpha_max, got {} and {}",
                self.alpha_min, self.alpha_max_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    ImmediateAccept,
    /// Growth reached a non-negative derivative.
    SignChangeUp,
    /// Shrinking reached a negative derivative.
    SignChangeDown,
    HitAlphaMax,
    HitAlphaMin,
}

impl fmt::Display for ExitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitReason::ImmediateAccept => "immediate_accept",
            ExitReason::SignChangeUp => "sign_change_up",
            ExitReason::SignChangeDown => "sign_change_down",
            ExitReason::HitAlphaMax => "hit_alpha_max",
            ExitReason::HitAlphaMin => "hit_alpha_min",
        })
    }
}

/// Search state after a probe: 0 = stop, 1 = shrinking, 2 = growing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub alpha: f64,
    pub derivative: f64,
    pub flag: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub alpha: f64,
    /// Evaluations consumed by this search.
    pub k: u64,
    pub exit_reason: ExitReason,
    /// `F'(alpha)` at the accepted step.
    pub last_derivative: f64,
    pub trace: Vec<Probe>,
}

/// Runs GOLS-I along `lf` from the warm-start step `alpha0`.
///
/// `initial_derivative` supplies `F'(0)` when it is already known (for
/// instance from the gradient that defined the direction); it is then not
/// re-evaluated and not counted in `k`.
pub fn golsi<L: LineFunction + ?Sized>(
    lf: &mut L,
    alpha0: f64,
    initial_derivative: Option<f64>,
    params: &GolsiParams,
) -> Result<StepResult> {
    params.validate()?;
    if !(alpha0 > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha0 must be positive, got {alpha0}")));
    }
    let norm = lf.direction_norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("zero search direction".into()));
    }

    let GolsiParams {
        eta,
        c2,
        alpha_min,
        alpha_max_cap,
    } = *params;
    let alpha_max = (1.0 / norm).min(alpha_max_cap);
    let mut trace = Vec::new();
    let mut k = 0u64;

    let probe = |lf: &mut L, alpha: f64, k: &mut u64, trace: &mut Vec<Probe>| -> Result<f64> {
        let dd = lf.directional_derivative(alpha)?;
        *k += 1;
        trace.push(Probe {
            index: trace.len(),
            alpha,
            derivative: dd,
            flag: 0,
        });
        if !dd.is_finite() {
            return Err(Error::NonFiniteDerivative {
                alpha,
                trace: trace.clone(),
            });
        }
        Ok(dd)
    };

    let d0 = match initial_derivative {
        Some(v) if v.is_finite() => v,
        Some(v) => {
            return Err(Error::NonFiniteDerivative {
                alpha: 0.0,
                trace: vec![Probe {
                    index: 0,
                    alpha: 0.0,
                    derivative: v,
                    flag: 0,
                }],
            })
        }
        None => probe(lf, 0.0, &mut k, &mut trace)?,
    };

    let mut alpha = alpha0;
    if alpha > alpha_max {
        alpha = alpha_max;
    }
    if alpha < alpha_min {
        alpha = alpha_min;
    }
    let mut dd = probe(lf, alpha, &mut k, &mut trace)?;
    let tol_dd = (c2 * d0).abs();

    let mut flag: u8;
    let mut exit = ExitReason::ImmediateAccept;
    if dd == 0.0 || (dd > 0.0 && dd < tol_dd) {
        flag = 0;
    } else if dd > 0.0 {
        if alpha > alpha_min {
            flag = 1;
        } else {
            flag = 0;
            exit = ExitReason::HitAlphaMin;
        }
    } else if alpha < alpha_max {
        flag = 2;
    } else {
        flag = 0;
        exit = ExitReason::HitAlphaMax;
    }
    set_flag(&mut trace, flag);

    while flag > 0 {
        if flag == 2 {
            alpha *= eta;
            dd = probe(lf, alpha, &mut k, &mut trace)?;
            if dd >= 0.0 {
                flag = 0;
                exit = ExitReason::SignChangeUp;
            } else if alpha > alpha_max / eta {
                flag = 0;
                exit = ExitReason::HitAlphaMax;
            }
        } else {
            alpha /= eta;
            dd = probe(lf, alpha, &mut k, &mut trace)?;
            if dd < 0.0 {
                flag = 0;
                exit = ExitReason::SignChangeDown;
            } else if alpha < alpha_min * eta {
                flag = 0;
                exit = ExitReason::HitAlphaMin;
            }
        }
        set_flag(&mut trace, flag);
    }

    Ok(StepResult {
        alpha,
        k,
        exit_reason: exit,
        last_derivative: dd,
        trace,
    })
}

fn set_flag(trace: &mut [Probe], flag: u8) {
    if let Some(p) = trace.last_mut() {
        p.flag = flag;
    }
}

/// Writes probe records as `i,alpha,derivative,flag`.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[Probe]) -> std::io::Result<()> {
    writeln!(out, "i,alpha,derivative,flag")?;
    for p in trace {
        writeln!(out, "{},{:e},{:e},{}", p.index, p.alpha, p.derivative, p.flag)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedRegime {
    Small,
    Medium,
    Large,
}

impl FromStr for FixedRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(FixedRegime::Small),
            "medium" => Ok(FixedRegime::Medium),
            "large" => Ok(FixedRegime::Large),
            other => Err(Error::InvalidArgument(format!("unknown step regime `{other}`"))),
        }
    }
}

impl fmt::Display for FixedRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixedRegime::Small => "small",
            FixedRegime::Medium => "medium",
            FixedRegime::Large => "large",
        })
    }
}

/// Constant learning rates per algorithm family. The three regimes span
/// three orders of magnitude.
pub fn fixed_step(regime: FixedRegime, algorithm: OptimizerKind) -> Result<f64> {
    let medium = match algorithm {
        OptimizerKind::Sgd | OptimizerKind::Nag => 10.0,
        OptimizerKind::Sgdm | OptimizerKind::Adadelta => 1.0,
        OptimizerKind::Adagrad | OptimizerKind::Adam => 0.1,
        OptimizerKind::Lbfgs => {
            return Err(Error::UnknownAlgorithm(format!(
                "no fixed step table entry for {algorithm}"
            )))
        }
    };
    Ok(match regime {
        FixedRegime::Small => medium / 10.0,
        FixedRegime::Medium => medium,
        FixedRegime::Large => medium * 10.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Norm small enough that alpha_max equals the 1e7 cap.
    const CAPPED_NORM: f64 = 1e-7;

    #[test]
    fn growth_trace_to_10_737() {
        let mut lf = derivative_line(CAPPED_NORM, |a| 2.0 * (a - 10.0));
        let r = golsi(&mut lf, 1e-8, None, &GolsiParams::default()).unwrap();
        let expected = 1e-8 * 2f64.powi(30);
        assert!(((r.alpha - expected) / expected).abs() < 1e-12);
        assert!((r.alpha - 10.737).abs() < 1e-3);
        assert_eq!(r.k, 32);
        assert_eq!(lf.evaluations(), 32);
        assert_eq!(r.exit_reason, ExitReason::SignChangeUp);
        assert_eq!(r.trace[1].flag, 2);
    }

    #[test]
    fn immediate_accept_trace() {
        let mut lf = derivative_line(1.0, |a| if a == 0.0 { -10.0 } else { 5.0 });
        let r = golsi(&mut lf, 0.3, None, &GolsiParams::default()).unwrap();
        assert_eq!(r.alpha, 0.3);
        assert_eq!(r.k, 2);
        assert_eq!(r.exit_reason, ExitReason::ImmediateAccept);
    }

    #[test]
    fn ascent_direction_bottoms_out() {
        let mut lf = derivative_line(1.0, |_| 1.0);
        let r = golsi(&mut lf, 1.0, None, &GolsiParams::default()).unwrap();
        let expected = 2f64.powi(-26);
        assert!(((r.alpha - expected) / expected).abs() < 1e-12);
        assert!((r.alpha - 1.49e-8).abs() < 1e-10);
        assert_eq!(r.exit_reason, ExitReason::HitAlphaMin);
        assert_eq!(r.k, 28);
    }

    #[test]
    fn alpha0_clamped_to_inverse_norm() {
        let mut lf = derivative_line(1e6, |_| 5.0);
        let r = golsi(&mut lf, 1.0, Some(-10.0), &GolsiParams::default()).unwrap();
        assert_eq!(r.trace[0].alpha, 1e-6);
        assert_eq!(r.alpha, 1e-6);
        assert_eq!(r.k, 1);
    }

    #[test]
    fn quadratic_derivative_by_hand() {
        // f(x) = x^2 from x = 1 along d = -2: F'(a) = d f'(1 + a d) = -4 + 8a
        let mut lf = derivative_line(2.0, |a| -2.0 * 2.0 * (1.0 - 2.0 * a));
        assert_eq!(lf.directional_derivative(0.5).unwrap(), 0.0);
        assert_eq!(lf.directional_derivative(0.0).unwrap(), -4.0);
    }

    #[test]
    fn zero_derivative_at_alpha0_is_accepted() {
        let mut lf = derivative_line(1.0, |a| if a == 0.0 { -1.0 } else { 0.0 });
        let r = golsi(&mut lf, 0.25, None, &GolsiParams::default()).unwrap();
        assert_eq!((r.alpha, r.k, r.exit_reason), (0.25, 2, ExitReason::ImmediateAccept));
    }

    #[test]
    fn reuse_does_not_count() {
        let mut lf = derivative_line(CAPPED_NORM, |a| a - 1.0);
        let r = golsi(&mut lf, 0.5, Some(-1.0), &GolsiParams::default()).unwrap();
        assert_eq!(r.k, lf.evaluations());
        assert!(r.trace.iter().all(|p| p.alpha > 0.0));
    }

    #[test]
    fn non_finite_aborts_with_trace() {
        let mut lf = derivative_line(CAPPED_NORM, |a| if a > 1e-6 { f64::NAN } else { -1.0 });
        match golsi(&mut lf, 1e-8, None, &GolsiParams::default()) {
            Err(Error::NonFiniteDerivative { trace, .. }) => {
                assert!(trace.len() > 2);
                assert!(trace.last().unwrap().derivative.is_nan());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_inputs() {
        let p = GolsiParams::default();
        assert!(golsi(&mut derivative_line(1.0, |_| 1.0), 0.0, None, &p).is_err());
        assert!(golsi(&mut derivative_line(0.0, |_| 1.0), 1.0, None, &p).is_err());
        let bad = GolsiParams { eta: 1.0, ..p };
        assert!(golsi(&mut derivative_line(1.0, |_| 1.0), 1.0, None, &bad).is_err());
    }

    #[test]
    fn growth_stops_at_alpha_max() {
        // alpha_max = 1: the last probe must be the first one past alpha_max / eta.
        let mut lf = derivative_line(1.0, |_| -1.0);
        let r = golsi(&mut lf, 1e-8, None, &GolsiParams::default()).unwrap();
        assert_eq!(r.exit_reason, ExitReason::HitAlphaMax);
        assert!(r.alpha > 0.5 && r.alpha <= 1.0);
    }

    #[test]
    fn fixed_step_table() {
        use OptimizerKind::*;
        assert_eq!(fixed_step(FixedRegime::Medium, Sgd).unwrap(), 10.0);
        assert_eq!(fixed_step(FixedRegime::Medium, Adadelta).unwrap(), 1.0);
        assert_eq!(fixed_step(FixedRegime::Large, Adam).unwrap(), 1.0);
        assert_eq!(fixed_step(FixedRegime::Small, Nag).unwrap(), 1.0);
        assert_eq!(fixed_step(FixedRegime::Small, Sgdm).unwrap(), 0.1);
        assert!((fixed_step(FixedRegime::Small, Adagrad).unwrap() - 0.01).abs() < 1e-18);
        assert!(matches!(fixed_step(FixedRegime::Small, Lbfgs), Err(Error::UnknownAlgorithm(_))));
    }

    #[test]
    fn trace_csv() {
        let mut lf = derivative_line(1.0, |a| if a == 0.0 { -10.0 } else { 5.0 });
        let r = golsi(&mut lf, 0.5, None, &GolsiParams::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &r.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("i,alpha,derivative,flag\n"));
    }

    proptest! {
        #[test]
        fn brackets_monotone_sign_change(log_opt in -7.5f64..6.5, log_a0 in -8.0f64..6.0) {
            let opt = 10f64.powf(log_opt);
            let p = GolsiParams::default();
            let fp = move |a: f64| a - opt;
            let mut lf = derivative_line(CAPPED_NORM, fp);
            let r = golsi(&mut lf, 10f64.powf(log_a0), Some(-opt), &p).unwrap();
            prop_assert_eq!(r.k, lf.evaluations());
            match r.exit_reason {
                ExitReason::SignChangeUp => {
                    prop_assert!(fp(r.alpha / p.eta) < 0.0 && fp(r.alpha) >= 0.0);
                }
                ExitReason::SignChangeDown => {
                    prop_assert!(fp(r.alpha) < 0.0 && fp(r.alpha * p.eta) >= 0.0);
                }
                ExitReason::ImmediateAccept => {
                    prop_assert!(fp(r.alpha) >= 0.0 && fp(r.alpha) < 0.9 * opt);
                }
                ExitReason::HitAlphaMin | ExitReason::HitAlphaMax => {}
            }
        }

        #[test]
        fn scale_equivariance(j in -6i32..6, log_opt in -4.0f64..3.0) {
            // f(x) = (x - x*)^2 / 2 from 0 along s d with |d| = 1e-4
            let opt = 10f64.powf(log_opt);
            let base_norm = 1e-4;
            let run = |s: f64| {
                let mut lf = derivative_line(base_norm * s, move |a| s * (s * a - opt));
                golsi(&mut lf, 1e-8, None, &GolsiParams::default()).unwrap()
            };
            let r1 = run(1.0);
            let s = 2f64.powi(j);
            let rs = run(s);
            if r1.exit_reason == ExitReason::SignChangeUp && rs.exit_reason == ExitReason::SignChangeUp {
                let ratio = rs.alpha * s / r1.alpha;
                prop_assert!((0.5..=2.0).contains(&ratio), "ratio {}", ratio);
            }
        }
    }
}
