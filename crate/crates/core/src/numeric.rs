//! Dense vector arithmetic and seeded random sampling.
//!
//! All arithmetic is `f64`. The random generator is ChaCha20 (`rand_chacha`),
//! seeded with [`SeedableRng::seed_from_u64`]; independent sub-streams of one
//! seed use the ChaCha stream counter, so a `(seed, stream)` pair always yields
//! the same sequence on a given build.

use std::ops::{Index, IndexMut};

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// A fixed-length vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, a: f64) -> Vector {
        Vector(self.0.iter().map(|v| a * v).collect())
    }

    pub fn neg(&self) -> Vector {
        Vector(self.0.iter().map(|v| -v).collect())
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.add_scaled(-1.0, other)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&v| f(v)).collect())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl<'a> IntoIterator for &'a Vector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn check_len(u: &Vector, v: &Vector) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(())
}

pub fn dot(u: &Vector, v: &Vector) -> Result<f64> {
    check_len(u, v)?;
    Ok(dot_unchecked(u, v))
}

pub(crate) fn dot_unchecked(u: &Vector, v: &Vector) -> f64 {
    u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum()
}

/// Componentwise (Hadamard) product.
pub fn hadamard(u: &Vector, v: &Vector) -> Result<Vector> {
    check_len(u, v)?;
    Ok(Vector(u.0.iter().zip(&v.0).map(|(a, b)| a * b).collect()))
}

fn pow_scalar(x: f64, q: f64) -> f64 {
    // Exact shortcuts for the exponents the optimizers use.
    if q == 1.0 {
        x
    } else if q == 0.5 {
        x.sqrt()
    } else if q == -0.5 {
        1.0 / x.sqrt()
    } else if q == -1.0 {
        1.0 / x
    } else {
        x.powf(q)
    }
}

/// Componentwise power `v_i^q`.
///
/// Fails with a domain error for a negative element under a fractional
/// exponent, or a zero element under a negative exponent.
pub fn hadamard_pow(v: &Vector, q: f64) -> Result<Vector> {
    let fractional = q.fract() != 0.0;
    let mut out = Vec::with_capacity(v.len());
    for (i, &x) in v.0.iter().enumerate() {
        if fractional && x < 0.0 {
            return Err(Error::Domain(format!(
                "element {i} = {x} raised to fractional power {q}"
            )));
        }
        if q < 0.0 && x == 0.0 {
            return Err(Error::Domain(format!(
                "element {i} is zero under negative power {q}"
            )));
        }
        out.push(pow_scalar(x, q));
    }
    Ok(Vector(out))
}

/// Deterministic random source (ChaCha20).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` of the generator seeded by `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

/// `p` independent draws from the uniform distribution on `[lo, hi]`.
pub fn uniform_init(rng: &mut SeededRng, p: usize, lo: f64, hi: f64) -> Result<Vector> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "uniform range requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("uniform_init with p = 0".into()));
    }
    let dist = Uniform::new_inclusive(lo, hi)
        .map_err(|e| Error::InvalidArgument(format!("uniform range: {e}")))?;
    Ok(Vector((0..p).map(|_| dist.sample(&mut rng.inner)).collect()))
}
