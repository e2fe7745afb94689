#![allow(dead_code)]

use std::path::PathBuf;

use gols::model::BatchEval;
use gols::{GradientOracle, Result, Vector};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// `f(x) = 1/2 (x - c)^T A (x - c)` with `A = diag(a) + u u^T`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub diag: Vec<f64>,
    pub u: Vec<f64>,
    pub centre: Vec<f64>,
    pub calls: u64,
}

impl Quadratic {
    pub fn ten_dimensional() -> Self {
        let n = 10;
        Quadratic {
            diag: (0..n).map(|i| 0.2 + 0.18 * i as f64).collect(),
            u: (0..n).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect(),
            centre: (0..n).map(|i| 1.0 - 0.25 * i as f64).collect(),
            calls: 0,
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = x.iter().zip(&self.centre).map(|(a, b)| a - b).collect();
        let ur: f64 = self.u.iter().zip(&r).map(|(a, b)| a * b).sum();
        (0..x.len())
            .map(|i| self.diag[i] * r[i] + self.u[i] * ur)
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(&self.centre).map(|(a, b)| a - b).collect();
        let ur: f64 = self.u.iter().zip(&r).map(|(a, b)| a * b).sum();
        0.5 * (r.iter().zip(&self.diag).map(|(ri, di)| di * ri * ri).sum::<f64>() + ur * ur)
    }
}

impl GradientOracle for Quadratic {
    fn gradient(&mut self, x: &Vector) -> Result<BatchEval> {
        self.calls += 1;
        Ok(BatchEval {
            loss: self.value(x.as_slice()),
            gradient: Vector::from(self.grad(x.as_slice())),
            batch_id: 0,
        })
    }

    fn evaluations(&self) -> u64 {
        self.calls
    }
}

/// Textbook optimizers on plain slices, one step per call.
pub trait Reference {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]);
}

pub struct RefSgd {
    pub lr: f64,
}

impl Reference for RefSgd {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let g = q.grad(x);
        for i in 0..x.len() {
            x[i] -= self.lr * g[i];
        }
    }
}

/// Heavy ball: `v <- mu v - lr g(x)`, `x <- x + v`.
pub struct RefMomentum {
    pub lr: f64,
    pub mu: f64,
    pub v: Vec<f64>,
}

impl Reference for RefMomentum {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let g = q.grad(x);
        for i in 0..x.len() {
            self.v[i] = self.mu * self.v[i] - self.lr * g[i];
            x[i] += self.v[i];
        }
    }
}

/// Nesterov in the Sutskever form: gradient at `x + mu v`.
pub struct RefNesterov {
    pub lr: f64,
    pub mu: f64,
    pub v: Vec<f64>,
}

impl Reference for RefNesterov {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let ahead: Vec<f64> = x.iter().zip(&self.v).map(|(a, b)| a + self.mu * b).collect();
        let g = q.grad(&ahead);
        for i in 0..x.len() {
            self.v[i] = self.mu * self.v[i] - self.lr * g[i];
            x[i] += self.v[i];
        }
    }
}

/// `G <- G + g^2`, `x <- x - lr g / sqrt(G + eps)`.
pub struct RefAdagrad {
    pub lr: f64,
    pub eps: f64,
    pub acc: Vec<f64>,
}

impl Reference for RefAdagrad {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let g = q.grad(x);
        for i in 0..x.len() {
            self.acc[i] += g[i] * g[i];
            x[i] -= self.lr * g[i] / (self.acc[i] + self.eps).sqrt();
        }
    }
}

/// Adadelta with unit learning rate: `E[g^2]` and `E[dx^2]` running averages
/// with decay `rho`; `E[dx^2]` starts at `dx2_init`.
pub struct RefAdadelta {
    pub rho: f64,
    pub eps: f64,
    pub g2: Vec<f64>,
    pub dx2: Vec<f64>,
}

impl RefAdadelta {
    pub fn new(n: usize, rho: f64, eps: f64, dx2_init: f64) -> Self {
        RefAdadelta {
            rho,
            eps,
            g2: vec![0.0; n],
            dx2: vec![dx2_init; n],
        }
    }
}

impl Reference for RefAdadelta {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let g = q.grad(x);
        for i in 0..x.len() {
            self.g2[i] = self.rho * self.g2[i] + (1.0 - self.rho) * g[i] * g[i];
            let dx = -((self.dx2[i] + self.eps).sqrt() / (self.g2[i] + self.eps).sqrt()) * g[i];
            x[i] += dx;
            self.dx2[i] = self.rho * self.dx2[i] + (1.0 - self.rho) * dx * dx;
        }
    }
}

/// Adam; `bias_power` selects `1 - beta^t` correction, otherwise `1 - beta`.
pub struct RefAdam {
    pub lr: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    pub bias_power: bool,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: i32,
}

impl RefAdam {
    pub fn new(n: usize, lr: f64, b1: f64, bias_power: bool) -> Self {
        RefAdam {
            lr,
            b1,
            b2: 0.999,
            eps: 1e-8,
            bias_power,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

impl Reference for RefAdam {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let g = q.grad(x);
        self.t += 1;
        let (c1, c2) = if self.bias_power {
            (1.0 - self.b1.powi(self.t), 1.0 - self.b2.powi(self.t))
        } else {
            (1.0 - self.b1, 1.0 - self.b2)
        };
        for i in 0..x.len() {
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g[i];
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// L-BFGS with a fixed step, two-loop recursion and initial scaling
/// `s.y / y.y`; pairs with `s.y <= 1e-10 |s| |y|` are skipped.
pub struct RefLbfgs {
    pub lr: f64,
    pub memory: usize,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub prev: Option<(Vec<f64>, Vec<f64>)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Reference for RefLbfgs {
    fn step(&mut self, q: &Quadratic, x: &mut [f64]) {
        let g = q.grad(x);
        if let Some((xp, gp)) = self.prev.take() {
            let s: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&gp).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if self.memory > 0 && sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                self.pairs.push((s, y));
                if self.pairs.len() > self.memory {
                    self.pairs.remove(0);
                }
            }
        }
        self.prev = Some((x.to_vec(), g.clone()));
        let mut r = g.clone();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (j, (s, y)) in self.pairs.iter().enumerate().rev() {
            let a = dot(s, &r) / dot(y, s);
            alphas[j] = a;
            for i in 0..r.len() {
                r[i] -= a * y[i];
            }
        }
        if let Some((s, y)) = self.pairs.last() {
            let gamma = dot(s, y) / dot(y, y);
            for v in r.iter_mut() {
                *v *= gamma;
            }
        }
        for (j, (s, y)) in self.pairs.iter().enumerate() {
            let b = dot(y, &r) / dot(y, s);
            for i in 0..r.len() {
                r[i] += (alphas[j] - b) * s[i];
            }
        }
        for i in 0..x.len() {
            x[i] -= self.lr * r[i];
        }
    }
}

/// Largest `|a - b| / max(1, |b|)` over components.
pub fn max_scaled_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Prints one acceptance line and returns whether it passed.
pub fn report(id: u32, name: &str, ok: bool, detail: String) -> bool {
    println!(
        "criterion {id:>2} {} {name}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}
