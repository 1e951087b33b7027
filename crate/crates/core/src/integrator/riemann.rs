use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{euclidean_density, measure_weight, reduce, ActionChannel, KernelEstimate, Mode, Observable};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Partition `0 = t_0 < … < t_n = T` whose nodes lie on the sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    times: Vec<f64>,
}

impl PartitionSpec {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Partition("nodes must increase strictly from 0".into()));
        }
        Ok(Self { times })
    }

    /// `intervals` equal pieces of `[0, T]`.
    pub fn uniform(duration: f64, intervals: usize) -> Result<Self> {
        let grid = TimeGrid::uniform(duration, intervals).map_err(|e| Error::Partition(e.to_string()))?;
        Self::new(grid.times().to_vec())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Grid indices of the nodes; fails unless the partition is nested in
    /// the grid and spans all of it.
    pub fn indices_on(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let idx = self
            .times
            .iter()
            .map(|&t| grid.index_of(t).ok_or_else(|| Error::Partition(format!("node {t} is not a grid time"))))
            .collect::<Result<Vec<usize>>>()?;
        if *idx.last().unwrap() != grid.len() - 1 {
            return Err(Error::Partition("partition must end at T".into()));
        }
        Ok(idx)
    }
}

/// Left-point sum `Σ_i 𝓥(t_i)Δt_i` on the partition.
pub fn left_point_sum(density: &[f64], grid: &TimeGrid, nodes: &[usize]) -> f64 {
    nodes.windows(2).map(|w| density[w[0]] * (grid.times()[w[1]] - grid.times()[w[0]])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiemannEstimate {
    /// `I_p` with the left-point action `S_p`.
    pub estimate: KernelEstimate,
    /// `I_μ` on the same samples with the grid action `S`.
    pub reference: KernelEstimate,
    /// `E_μ[|S − S_p|]`.
    pub mean_abs_gap: f64,
    pub mean_abs_gap_se: f64,
    /// `E_μ[|O|·c·|S − S_p|]` with `c = 1` (Lorentzian) or `e^{−min(S, S_p)}`
    /// (Euclidean); bounds `|I_p − I_μ|` sample by sample.
    pub bound: f64,
    pub holds: bool,
}

impl RiemannEstimate {
    pub fn difference(&self) -> f64 {
        (self.estimate.value - self.reference.value).norm()
    }
}

/// Time-sliced estimate `I_p` with the convergence diagnostic `E|S − S_p|`.
pub fn riemann_product(
    ensemble: &Ensemble,
    observable: &Observable,
    partition: &PartitionSpec,
    mode: Mode,
    channel: ActionChannel,
) -> Result<RiemannEstimate> {
    if ensemble.is_empty() {
        return Err(Error::NoData);
    }
    let grid = ensemble.sampler().grid().clone();
    let nodes = partition.indices_on(&grid)?;
    let chart = ensemble.sampler().chart();
    let hbar = ensemble.sampler().spec().hbar;
    let zero = Complex64::new(0.0, 0.0);
    let rows = ensemble.map(|s| {
        let w = measure_weight(s);
        if w == 0.0 {
            return Ok([zero; 4]);
        }
        let o = observable.on_path(&s.path)?;
        let density = euclidean_density(chart, &s.path, hbar, channel);
        let full = grid.trapezoid(&density);
        let sliced = left_point_sum(&density, &grid, &nodes);
        let gap = (full - sliced).abs();
        let factor = match mode {
            Mode::Lorentzian => 1.0,
            Mode::Euclidean => (-full.min(sliced)).exp(),
        };
        Ok([
            o * w * mode.weight(sliced),
            o * w * mode.weight(full),
            Complex64::new(w * gap, 0.0),
            Complex64::new(w * o.norm() * factor * gap, 0.0),
        ])
    })?;
    let run = ensemble.run();
    let column = |j: usize| -> Result<_> { reduce(run, &rows.iter().map(|r| r[j]).collect::<Vec<_>>()) };
    let (ip, imu, gap, bound) = (column(0)?, column(1)?, column(2)?, column(3)?);
    let mut estimate = KernelEstimate::from_accumulator(&ip, mode.as_str(), run.seed);
    estimate.partition_mesh = Some(partition.mesh());
    let mut reference = KernelEstimate::from_accumulator(&imu, mode.as_str(), run.seed);
    reference.partition_mesh = Some(grid.mesh());
    let diff = (ip.mean - imu.mean).norm();
    let holds = diff <= bound.mean.re * (1.0 + 1e-12) + 1e-15;
    Ok(RiemannEstimate { estimate, reference, mean_abs_gap: gap.mean.re, mean_abs_gap_se: gap.std_error(), bound: bound.mean.re, holds })
}
