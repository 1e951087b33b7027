//! Monte Carlo estimators over tube ensembles.
//!
//! Every estimator multiplies the per-sample measure weight
//! (`exp(log dμ/dΓ)` for reweighted bridges, 1 for drifted paths) with an
//! observable and an action weight, and reduces with [`McAccumulator`] in
//! chunk order so that results do not depend on the worker count.
//!
//! Action weights are built from the density 𝓥 returned by
//! [`euclidean_density`]: `exp(−A)` in Euclidean mode and `exp(+iA)` in
//! Lorentzian mode, with `A = ∫𝓥 dt` (trapezoid on the sampling grid). The
//! Lorentzian weight is the θ = −i member of the Feynman–Kac family; it is
//! a bookkeeping object and carries no claim beyond unit modulus.

mod feynman_kac;
mod fubini;
mod riemann;

pub use feynman_kac::{feynman_kac_expectation, lorentzian_from_theta, theta_series, FeynmanKacTable, ThetaSeries, MAX_SERIES_ORDER};
pub use fubini::{disintegration_check, Disintegration};
pub use riemann::{riemann_product, PartitionSpec, RiemannEstimate};

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SampleRoute, SdeParams};
use crate::ensemble::{map_chunks, Ensemble, RunConfig, Sample};
use crate::error::{Error, Result};
use crate::geometry::MetricChart;
use crate::oracles::heat_kernel;
use crate::stats::McAccumulator;
use crate::tube::{DiscretePath, TubeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lorentzian,
    Euclidean,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Lorentzian => "lorentzian",
            Mode::Euclidean => "euclidean",
        }
    }

    /// `exp(−A)` or `exp(iA)`.
    pub fn weight(&self, a: f64) -> Complex64 {
        match self {
            Mode::Euclidean => Complex64::new((-a).exp(), 0.0),
            Mode::Lorentzian => Complex64::from_polar(1.0, a),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionChannel {
    /// `V(X)/ħ`: the diffusion law carries the kinetic part.
    #[default]
    PotentialOnly,
    /// `(½g(Ẋ, Ẋ) + V(X))/ħ`.
    FullLagrangian,
}

type EndpointFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
type PathFn = Arc<dyn Fn(&DiscretePath) -> Complex64 + Send + Sync>;
type FiberFn = Arc<dyn Fn(&[f64], f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Endpoint(EndpointFn),
    Path(PathFn),
    Fiber(FiberFn),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableKind {
    Endpoint,
    Path,
    Fiber,
}

/// A bounded observable. Every evaluation is checked against `bound`.
#[derive(Clone)]
pub struct Observable {
    eval: Evaluator,
    bound: f64,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable").field("kind", &self.kind()).field("bound", &self.bound).finish()
    }
}

impl Observable {
    /// `f(X_T)`.
    pub fn endpoint<F>(bound: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Self { eval: Evaluator::Endpoint(Arc::new(f)), bound }
    }

    /// `F(X)` on the whole path.
    pub fn path<F>(bound: f64, f: F) -> Self
    where
        F: Fn(&DiscretePath) -> Complex64 + Send + Sync + 'static,
    {
        Self { eval: Evaluator::Path(Arc::new(f)), bound }
    }

    /// `F(x, t)` with `x = X_t − γ₀(t)` the displacement at time `t`.
    pub fn fiber<F>(bound: f64, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> Complex64 + Send + Sync + 'static,
    {
        Self { eval: Evaluator::Fiber(Arc::new(f)), bound }
    }

    /// Endpoint observable equal to `c` everywhere.
    pub fn constant(c: Complex64) -> Self {
        Self::endpoint(c.norm(), move |_| c)
    }

    pub fn kind(&self) -> ObservableKind {
        match self.eval {
            Evaluator::Endpoint(_) => ObservableKind::Endpoint,
            Evaluator::Path(_) => ObservableKind::Path,
            Evaluator::Fiber(_) => ObservableKind::Fiber,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn checked(&self, v: Complex64) -> Result<Complex64> {
        let m = v.norm();
        if !(m <= self.bound * (1.0 + 1e-12)) {
            return Err(Error::MisdeclaredBound { value: m, bound: self.bound });
        }
        Ok(v)
    }

    /// Value on a whole path (endpoint and path kinds).
    pub fn on_path(&self, path: &DiscretePath) -> Result<Complex64> {
        match &self.eval {
            Evaluator::Endpoint(f) => self.checked(f(path.end())),
            Evaluator::Path(f) => self.checked(f(path)),
            Evaluator::Fiber(_) => Err(Error::Domain("fiber observables need a time argument".into())),
        }
    }

    pub fn on_fiber(&self, x: &[f64], t: f64) -> Result<Complex64> {
        match &self.eval {
            Evaluator::Fiber(f) => self.checked(f(x, t)),
            _ => Err(Error::Domain("expected a fiber observable".into())),
        }
    }
}

/// Monte Carlo estimate with metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub value: Complex64,
    pub std_error: f64,
    pub n_samples: u64,
    pub mode: String,
    pub theta: Option<Complex64>,
    pub partition_mesh: Option<f64>,
    pub seed: u64,
}

/// Flat JSON layout of a [`KernelEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub value_re: f64,
    pub value_im: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub mode: String,
    pub theta: Option<String>,
    pub partition_mesh: Option<f64>,
    pub seed: u64,
    pub config_hash: Option<String>,
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}

impl KernelEstimate {
    pub fn from_accumulator(acc: &McAccumulator, mode: &str, seed: u64) -> Self {
        Self {
            value: acc.mean,
            std_error: acc.std_error(),
            n_samples: acc.count,
            mode: mode.to_string(),
            theta: None,
            partition_mesh: None,
            seed,
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.value *= factor;
        self.std_error *= factor.abs();
        self
    }

    pub fn record(&self, config_hash: Option<String>) -> EstimateRecord {
        EstimateRecord {
            value_re: self.value.re,
            value_im: self.value.im,
            std_error: self.std_error,
            n_samples: self.n_samples,
            mode: self.mode.clone(),
            theta: self.theta.map(format_complex),
            partition_mesh: self.partition_mesh,
            seed: self.seed,
            config_hash,
        }
    }
}

/// Per-node density 𝓥(t_k) of a path.
pub fn euclidean_density(chart: &MetricChart, path: &DiscretePath, hbar: f64, channel: ActionChannel) -> Vec<f64> {
    let d = path.dim();
    let vel = match channel {
        ActionChannel::FullLagrangian => Some(path.velocities()),
        ActionChannel::PotentialOnly => None,
    };
    (0..path.len())
        .map(|k| {
            let q = path.point_vec(k);
            let mut l = chart.potential().value(&q);
            if let Some(v) = &vel {
                let v = DVector::from_column_slice(&v[k * d..(k + 1) * d]);
                l += 0.5 * chart.inner(&q, &v, &v);
            }
            l / hbar
        })
        .collect()
}

/// Measure weight of a sample, 0 when the log weight is −∞.
pub(crate) fn measure_weight(sample: &Sample) -> f64 {
    sample.fluct.measure_log_weight().exp()
}

/// Samples per leaf of the reduction tree. Fixed so that totals do not
/// depend on the chunking or worker count of a run.
pub const REDUCTION_BLOCK: usize = 1024;

/// Reduces per-sample values in index order.
pub(crate) fn reduce(run: &RunConfig, values: &[Complex64]) -> Result<McAccumulator> {
    let blocks = RunConfig { chunk_size: REDUCTION_BLOCK, ..*run };
    Ok(merge_parts(&reduce_parts(&blocks, values)?))
}

fn reduce_parts(run: &RunConfig, values: &[Complex64]) -> Result<Vec<McAccumulator>> {
    let run = RunConfig { n_samples: values.len(), ..*run };
    map_chunks(&run, |r| Ok(values[r].iter().copied().collect::<McAccumulator>()))
}

fn merge_parts(parts: &[McAccumulator]) -> McAccumulator {
    parts.iter().fold(McAccumulator::new(), |acc, p| acc.merged(p))
}

/// Fills `action_integral` of a sample with `∫𝓥 dt`.
pub fn annotate_action(sample: &mut Sample, chart: &MetricChart, hbar: f64, channel: ActionChannel) {
    let density = euclidean_density(chart, &sample.path, hbar, channel);
    sample.fluct.action_integral = sample.path.grid().trapezoid(&density);
}

/// `E_μ[O(X)·w(A)]` with `w = exp(−A)` or `exp(iA)`.
pub fn stochastic_path_integral(ensemble: &Ensemble, observable: &Observable, mode: Mode, channel: ActionChannel) -> Result<KernelEstimate> {
    if ensemble.is_empty() {
        return Err(Error::NoData);
    }
    let chart = ensemble.sampler().chart();
    let hbar = ensemble.sampler().spec().hbar;
    let values = ensemble.map(|s| {
        let w = measure_weight(s);
        if w == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let o = observable.on_path(&s.path)?;
        let a = s.path.grid().trapezoid(&euclidean_density(chart, &s.path, hbar, channel));
        Ok(o * w * mode.weight(a))
    })?;
    let acc = reduce(ensemble.run(), &values)?;
    Ok(KernelEstimate::from_accumulator(&acc, mode.as_str(), ensemble.run().seed))
}

/// Log of the Cameron–Martin factor that moves bridges centred on γ₀ to
/// bridges centred on the straight line from x to y:
/// `−Σ ΔW_k·Δh_k/(σ²Δt_k) − Σ |Δh_k|²/(2σ²Δt_k)`, `h = γ₀ − line`, `W = X − γ₀`.
pub fn centering_log_weight(path: &DiscretePath, spec: &TubeSpec, sigma: f64) -> f64 {
    let traj = &spec.trajectory;
    let grid = path.grid();
    let big_t = grid.duration();
    let (a, b) = (traj.start(), traj.end());
    let d = path.dim();
    let h = |k: usize, i: usize| {
        let s = grid.times()[k] / big_t;
        traj.points[k][i] - (a[i] + s * (b[i] - a[i]))
    };
    let s2 = sigma * sigma;
    let mut cross = 0.0;
    let mut quad = 0.0;
    for k in 0..grid.steps() {
        let dt = grid.dt(k);
        for i in 0..d {
            let dh = h(k + 1, i) - h(k, i);
            if dh == 0.0 {
                continue;
            }
            let dw = (path.point(k + 1)[i] - traj.points[k + 1][i]) - (path.point(k)[i] - traj.points[k][i]);
            cross += dw * dh / (s2 * dt);
            quad += dh * dh / (2.0 * s2 * dt);
        }
    }
    -cross - quad
}

/// Kernel `K(x, y)` between the endpoints of `spec.trajectory` as
/// `heat_kernel(x, y, T, σ) · E[1_tube · exp(−∫V/ħ dt)]` over Brownian
/// bridges (Euclidean mode) or with `exp(+i∫V/ħ dt)` (Lorentzian mode).
///
/// The bridges are sampled around γ₀ and recentred with
/// [`centering_log_weight`]. The tube indicator applies when
/// `params.barrier_strength > 0`; ξ and the barrier drift are not used.
/// With `σ² = ħ` and unit mass the Euclidean value is the imaginary-time
/// propagator. Only flat charts are supported.
pub fn propagator(chart: &MetricChart, spec: &TubeSpec, params: &SdeParams, run: &RunConfig, mode: Mode) -> Result<KernelEstimate> {
    Ok(propagator_with_chunks(chart, spec, params, run, mode)?.0)
}

/// [`propagator`] together with the partial estimate of every chunk of
/// `run`, in chunk order and already scaled by the heat kernel.
pub fn propagator_with_chunks(
    chart: &MetricChart,
    spec: &TubeSpec,
    params: &SdeParams,
    run: &RunConfig,
    mode: Mode,
) -> Result<(KernelEstimate, Vec<KernelEstimate>)> {
    if !chart.is_flat() {
        return Err(Error::Domain("the propagator factorization needs a flat chart".into()));
    }
    if run.n_samples == 0 {
        return Err(Error::NoData);
    }
    let confined = params.confined();
    let bridge = SdeParams { barrier_strength: 0.0, xi: crate::dynamics::XiProfile::Constant(0.0), route: SampleRoute::Reweighted, ..params.clone() };
    let ensemble = Ensemble::build(chart.clone(), spec.clone(), bridge, *run)?;
    let hbar = spec.hbar;
    let sigma = params.sigma;
    let values = ensemble.map(|s| {
        if confined && !s.fluct.in_tube {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let a = s.path.grid().trapezoid(&euclidean_density(chart, &s.path, hbar, ActionChannel::PotentialOnly));
        let c = centering_log_weight(&s.path, spec, sigma).exp();
        Ok(mode.weight(a) * c)
    })?;
    let total = reduce(run, &values)?;
    let parts = reduce_parts(run, &values)?;
    let x = spec.trajectory.start().as_slice();
    let y = spec.trajectory.end().as_slice();
    let heat = heat_kernel(x, y, spec.duration(), sigma);
    let scale = |acc: &McAccumulator| KernelEstimate::from_accumulator(acc, mode.as_str(), run.seed).scaled(heat);
    Ok((scale(&total), parts.iter().map(scale).collect()))
}

#[cfg(test)]
mod tests;
