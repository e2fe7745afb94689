//! Directional scans of sub-sampled losses.
//!
//! A scan evaluates `(F, F')` on a grid of step sizes. Sign changes of `F'`
//! from negative to non-negative mark stochastic gradient-only optimality
//! candidates (SNN-GPPs); strict interior minima of `F` mark what a
//! function-value line search would accept. Histogramming both over many
//! independently sampled scans gives their empirical location densities.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{BatchMode, BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::linesearch::{LineFunction, NetworkLine, Objective};
use crate::model::MlpSpec;
use crate::numeric::{SeededRng, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub snngpp_events: Vec<usize>,
    pub local_min_events: Vec<usize>,
}

impl ScanResult {
    /// `[min, max]` step size over the SNN-GPP events.
    pub fn b_eps_support(&self) -> Option<(f64, f64)> {
        let first = self.snngpp_events.first()?;
        let last = self.snngpp_events.last()?;
        Some((self.alphas[*first], self.alphas[*last]))
    }
}

fn check_grid(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("empty scan grid".into()));
    }
    if alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("scan grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `start, start + step, ...` with `count` points.
pub fn uniform_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + step * i as f64).collect()
}

pub fn scan_line<L: LineFunction + ?Sized>(lf: &mut L, alphas: &[f64]) -> Result<ScanResult> {
    check_grid(alphas)?;
    let mut values = Vec::with_capacity(alphas.len());
    let mut derivatives = Vec::with_capacity(alphas.len());
    for &a in alphas {
        let p = lf.evaluate(a)?;
        values.push(p.value);
        derivatives.push(p.derivative);
    }
    Ok(ScanResult {
        alphas: alphas.to_vec(),
        snngpp_events: detect_snngpp(&derivatives),
        local_min_events: detect_local_min(&values),
        values,
        derivatives,
    })
}

/// Indices `i + 1` where `F'[i] < 0 <= F'[i + 1]`.
pub fn detect_snngpp(derivatives: &[f64]) -> Vec<usize> {
    derivatives
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Interior indices with `F[i-1] > F[i] < F[i+1]`.
pub fn detect_local_min(values: &[f64]) -> Vec<usize> {
    values
        .windows(3)
        .enumerate()
        .filter(|(_, w)| w[0] > w[1] && w[1] < w[2])
        .map(|(i, _)| i + 1)
        .collect()
}

/// Empirical event density on a scan grid; bin `i` is centred on grid point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfEstimate {
    pub bin_edges: Vec<f64>,
    pub bin_centres: Vec<f64>,
    pub counts: Vec<u64>,
    /// Empty when no events were observed.
    pub probabilities: Vec<f64>,
    pub n_runs: usize,
}

impl PdfEstimate {
    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn total_events(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_bins() as f64 / self.counts.len() as f64
    }

    /// Centres of the first and last occupied bin.
    pub fn support(&self) -> Option<(f64, f64)> {
        let lo = self.counts.iter().position(|&c| c > 0)?;
        let hi = self.counts.iter().rposition(|&c| c > 0)?;
        Some((self.bin_centres[lo], self.bin_centres[hi]))
    }

    pub fn support_width(&self) -> Option<f64> {
        self.support().map(|(a, b)| b - a)
    }

    /// Probability for bin `i` (0 when empty).
    pub fn probability(&self, i: usize) -> f64 {
        self.probabilities.get(i).copied().unwrap_or(0.0)
    }
}

fn bin_edges(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n == 1 {
        return vec![grid[0] - 0.5, grid[0] + 0.5];
    }
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(grid[0] - 0.5 * (grid[1] - grid[0]));
    for w in grid.windows(2) {
        edges.push(0.5 * (w[0] + w[1]));
    }
    edges.push(grid[n - 1] + 0.5 * (grid[n - 1] - grid[n - 2]));
    edges
}

pub fn estimate_pdf(event_lists: &[Vec<usize>], grid: &[f64]) -> Result<PdfEstimate> {
    check_grid(grid)?;
    let mut counts = vec![0u64; grid.len()];
    for events in event_lists {
        for &i in events {
            if i >= grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "event index {i} outside a grid of {}",
                    grid.len()
                )));
            }
            counts[i] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let probabilities = if total == 0 {
        Vec::new()
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(PdfEstimate {
        bin_edges: bin_edges(grid),
        bin_centres: grid.to_vec(),
        counts,
        probabilities,
        n_runs: event_lists.len(),
    })
}

/// Densities of SNN-GPP and local-minimum events for one batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSizeStudy {
    pub batch_size: usize,
    pub mode: BatchMode,
    pub snngpp: PdfEstimate,
    pub local_min: PdfEstimate,
}

/// Repeated scans along a fixed direction from a fixed point.
///
/// A batch size at least as large as the pool uses the full pool; smaller
/// sizes draw a fresh batch with replacement at every grid point. Run `r` of
/// batch size `b` samples from the stream `(seed, r)`.
#[allow(clippy::too_many_arguments)]
pub fn scan_study(
    spec: &MlpSpec,
    data: &Dataset,
    pool: &[usize],
    origin: &Vector,
    direction: &Vector,
    grid: &[f64],
    batch_sizes: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<BatchSizeStudy>> {
    check_grid(grid)?;
    if runs == 0 {
        return Err(Error::InvalidArgument("scan study needs at least one run".into()));
    }
    batch_sizes
        .iter()
        .map(|&bs| {
            let mode = if bs >= pool.len() {
                BatchMode::Full
            } else {
                BatchMode::DynamicWithReplacement
            };
            let scans: Vec<ScanResult> = (0..runs)
                .into_par_iter()
                .map(|r| {
                    let rng = SeededRng::with_stream(seed.wrapping_add(bs as u64), r as u64);
                    let sampler = BatchSampler::new(mode, bs, pool.to_vec(), rng)?;
                    let mut objective = Objective::new(spec, data, sampler);
                    let mut line = NetworkLine::new(&mut objective, origin, direction);
                    scan_line(&mut line, grid)
                })
                .collect::<Result<_>>()?;
            let snn: Vec<Vec<usize>> = scans.iter().map(|s| s.snngpp_events.clone()).collect();
            let lmin: Vec<Vec<usize>> = scans.iter().map(|s| s.local_min_events.clone()).collect();
            Ok(BatchSizeStudy {
                batch_size: bs,
                mode,
                snngpp: estimate_pdf(&snn, grid)?,
                local_min: estimate_pdf(&lmin, grid)?,
            })
        })
        .collect()
}

/// `alpha_bin,pdf_snngpp,pdf_localmin` rows for one study.
pub fn write_pdf_csv<W: Write>(mut out: W, study: &BatchSizeStudy) -> std::io::Result<()> {
    writeln!(out, "alpha_bin,pdf_snngpp,pdf_localmin")?;
    for (i, a) in study.snngpp.bin_centres.iter().enumerate() {
        writeln!(
            out,
            "{},{},{}",
            a,
            study.snngpp.probability(i),
            study.local_min.probability(i)
        )?;
    }
    Ok(())
}
