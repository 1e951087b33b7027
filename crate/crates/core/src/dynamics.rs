//! Fluctuation sampling around a classical trajectory.
//!
//! A fluctuation is written in the parallel frame as normal coefficients
//! `χ^i(t)` plus a scalar longitudinal displacement `p_L(t)` along the unit
//! tangent. Both vanish at the endpoints. Two routes produce the drifted law
//! μ of the covariant SDE:
//!
//! * [`SampleRoute::Reweighted`]: exact Brownian bridges (the reference law
//!   Γ) carrying the log density `log dμ/dΓ`;
//! * [`SampleRoute::Drifted`]: Euler steps of the drifted bridge dynamics,
//!   with per-step resampling at the tube wall.
//!
//! Steps use the bridge-conditioned transition: from `χ_k` the next value is
//! Gaussian with mean `(χ_k + b_kΔt_k)ρ_k` and variance `σ²Δt_kρ_k`, where
//! `ρ_k = (T − t_{k+1})/(T − t_k)`. Under Γ (`b = 0`) this is the exact bridge
//! law, and the likelihood ratio of the two chains is the discrete Girsanov
//! sum computed by [`girsanov_log_weight`], so `E_Γ[e^{log w}] = 1` holds
//! exactly rather than only in the continuum limit.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exp_map, fd_step, hamiltonian, ClassicalTrajectory, ExpOptions, Frame, MetricChart};
use crate::grid::TimeGrid;
use crate::tube::{DiscretePath, TubeSpec};

/// `|χ|` below which the energy-cost and barrier gradients are taken as 0.
pub const ZERO_DISPLACEMENT: f64 = 1e-12;

pub const GAUGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleRoute {
    #[default]
    Reweighted,
    Drifted,
}

/// Stiffness profile `ξ(t)`.
#[derive(Clone)]
pub enum XiProfile {
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl XiProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            XiProfile::Constant(x) => *x,
            XiProfile::Custom(f) => f(t),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, XiProfile::Constant(x) if *x == 0.0)
    }
}

impl fmt::Debug for XiProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XiProfile::Constant(x) => write!(f, "Constant({x})"),
            XiProfile::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdeParams {
    pub sigma: f64,
    pub xi: XiProfile,
    /// κ; zero disables the barrier and the wall resampling.
    pub barrier_strength: f64,
    pub barrier_power: u32,
    pub route: SampleRoute,
    pub max_retries: usize,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            xi: XiProfile::Constant(0.0),
            barrier_strength: 1.0,
            barrier_power: 2,
            route: SampleRoute::Reweighted,
            max_retries: 32,
        }
    }
}

impl SdeParams {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.barrier_strength >= 0.0) || !self.barrier_strength.is_finite() {
            return Err(Error::Domain(format!("barrier strength must be ≥ 0, got {}", self.barrier_strength)));
        }
        if self.barrier_power < 2 {
            return Err(Error::Domain(format!("barrier power must be ≥ 2, got {}", self.barrier_power)));
        }
        if let Some(t) = grid.times().iter().find(|&&t| !self.xi.at(t).is_finite()) {
            return Err(Error::Domain(format!("xi(t) is not finite at t = {t}")));
        }
        Ok(())
    }

    pub fn confined(&self) -> bool {
        self.barrier_strength > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPath {
    /// Number of normal directions (n − 1).
    pub normal_dim: usize,
    /// `χ^i(t_k)`, row-major over nodes.
    pub normal_components: Vec<f64>,
    /// Gauge-fixed `p_L(t_k)`.
    pub longitudinal: Vec<f64>,
    /// Coefficient of the bump profile removed by the gauge projection.
    pub gauge_mode: f64,
    pub log_girsanov: f64,
    /// `∫𝓥 dt`, left at zero by the sampler.
    pub action_integral: f64,
    pub in_tube: bool,
    /// Number of rejected wall-crossing proposals (drifted route).
    pub resampled: usize,
    pub route: SampleRoute,
}

impl FluctuationPath {
    pub fn chi(&self, k: usize) -> &[f64] {
        &self.normal_components[k * self.normal_dim..(k + 1) * self.normal_dim]
    }

    pub fn nodes(&self) -> usize {
        self.longitudinal.len()
    }

    pub fn max_normal_norm(&self) -> f64 {
        (0..self.nodes()).map(|k| norm(self.chi(k))).fold(0.0, |m: f64, x| if x > m { x } else { m })
    }

    /// Log weight that turns a plain average over this route into a
    /// μ-expectation: `log dμ/dΓ` for reweighted bridges, 0 for drifted paths.
    pub fn measure_log_weight(&self) -> f64 {
        match self.route {
            SampleRoute::Reweighted => self.log_girsanov,
            SampleRoute::Drifted => 0.0,
        }
    }

    /// Full longitudinal displacement including the gauge zero mode.
    pub fn longitudinal_with_mode(&self, grid: &TimeGrid) -> Vec<f64> {
        let phi = bump_profile(grid);
        self.longitudinal.iter().zip(&phi).map(|(p, f)| p + self.gauge_mode * f).collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Pinned Brownian bridge values `W(t_k)` (row-major, `dim` per node) built
/// as `B(t) − (t/T)B(T)` from a fresh Wiener sample.
pub fn sample_brownian_bridge<R: Rng + ?Sized>(dim: usize, grid: &TimeGrid, sigma: f64, rng: &mut R) -> Vec<f64> {
    let n = grid.len();
    let t = grid.times();
    let big_t = grid.duration();
    let mut b = vec![0.0; n * dim];
    for k in 1..n {
        let s = sigma * grid.dt(k - 1).sqrt();
        for i in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            b[k * dim + i] = b[(k - 1) * dim + i] + s * z;
        }
    }
    let mut w = vec![0.0; n * dim];
    for k in 1..n - 1 {
        let frac = t[k] / big_t;
        for i in 0..dim {
            w[k * dim + i] = b[k * dim + i] - frac * b[(n - 1) * dim + i];
        }
    }
    w
}

/// `ρ_k = (T − t_{k+1})/(T − t_k)`, zero on the last step.
fn bridge_ratios(grid: &TimeGrid) -> Vec<f64> {
    let t = grid.times();
    let big_t = grid.duration();
    (0..grid.steps()).map(|k| if k + 1 == grid.steps() { 0.0 } else { (big_t - t[k + 1]) / (big_t - t[k]) }).collect()
}

/// `(1/σ)Σ b_k·ΔB_k − ½Σ |b_k/σ|² Δτ_k` with left-point drifts.
///
/// `increments` are the bridge innovations `ΔB_k` (row-major, `dim` per
/// step) and `dtau` the matching conditional variances per unit σ², i.e.
/// `Δt_kρ_k` for bridge-conditioned steps.
pub fn girsanov_log_weight(increments: &[f64], drifts: &[f64], dtau: &[f64], dim: usize, sigma: f64) -> f64 {
    let mut ito = 0.0;
    let mut quad = 0.0;
    for (k, &dt) in dtau.iter().enumerate() {
        for i in 0..dim {
            let b = drifts[k * dim + i] / sigma;
            ito += b * increments[k * dim + i];
            quad += b * b * dt;
        }
    }
    ito - 0.5 * quad
}

/// `φ(t) = 4t(T − t)/T²`.
pub fn bump_profile(grid: &TimeGrid) -> Vec<f64> {
    let big_t = grid.duration();
    grid.times().iter().map(|&t| 4.0 * t * (big_t - t) / (big_t * big_t)).collect()
}

/// Removes the component along the bump profile so that `∫p_L dt = 0`
/// (trapezoid rule). Returns the projected samples and the removed
/// coefficient.
pub fn gauge_fix_longitudinal(grid: &TimeGrid, p: &[f64]) -> (Vec<f64>, f64) {
    let phi = bump_profile(grid);
    let c = grid.trapezoid(p) / grid.trapezoid(&phi);
    let mut out: Vec<f64> = p.iter().zip(&phi).map(|(x, f)| x - c * f).collect();
    let last = out.len() - 1;
    out[0] = p[0];
    out[last] = p[last];
    (out, c)
}

/// `|H(γ₀(t_k), p₀(t_k)) − H(exp_{γ₀(t_k)}(v), p₀(t_k))|` at grid node `k`.
pub fn energy_cost(chart: &MetricChart, traj: &ClassicalTrajectory, k: usize, v: &DVector<f64>) -> Result<f64> {
    let q = &traj.points[k];
    let p = &traj.momenta[k];
    let moved = exp_map(chart, q, v, &ExpOptions::default())?;
    Ok((hamiltonian(chart, q, p)? - hamiltonian(chart, &moved, p)?).abs())
}

/// `U_conf(r) = κ s^m/(1 − s²)` with `s = r/R`.
pub fn barrier_potential(r: f64, radius: f64, params: &SdeParams) -> Result<f64> {
    if r >= radius {
        return Err(Error::Boundary { r, radius });
    }
    let s = r / radius;
    Ok(params.barrier_strength * s.powi(params.barrier_power as i32) / (1.0 - s * s))
}

/// `dU_conf/dr = (κ/R)(m s^{m−1}(1 − s²) + 2s^{m+1})/(1 − s²)²`.
pub fn barrier_gradient(r: f64, spec: &TubeSpec, params: &SdeParams) -> Result<f64> {
    barrier_gradient_radius(r, spec.radius, params)
}

fn barrier_gradient_radius(r: f64, radius: f64, params: &SdeParams) -> Result<f64> {
    if r >= radius {
        return Err(Error::Boundary { r, radius });
    }
    if params.barrier_strength == 0.0 || r < ZERO_DISPLACEMENT {
        return Ok(0.0);
    }
    let m = params.barrier_power as i32;
    let s = r / radius;
    let d = 1.0 - s * s;
    Ok(params.barrier_strength / radius * (m as f64 * s.powi(m - 1) * d + 2.0 * s.powi(m + 1)) / (d * d))
}

/// Precomputed state for repeated sampling around one trajectory.
#[derive(Debug, Clone)]
pub struct FluctuationSampler {
    chart: MetricChart,
    spec: TubeSpec,
    frame: Frame,
    params: SdeParams,
    normals: Vec<usize>,
    ratios: Vec<f64>,
    base_energy: Vec<f64>,
    energy_cost_zero: bool,
    drift_free: bool,
}

impl FluctuationSampler {
    pub fn new(chart: MetricChart, spec: TubeSpec, frame: Frame, params: SdeParams) -> Result<Self> {
        let grid = &spec.trajectory.grid;
        params.validate(grid)?;
        if frame.vectors.len() != grid.len() {
            return Err(Error::Shape(format!("frame has {} nodes, trajectory {}", frame.vectors.len(), grid.len())));
        }
        if grid.len() < 3 {
            return Err(Error::Shape("sampling needs at least two steps".into()));
        }
        let traj = &spec.trajectory;
        let base_energy = traj
            .points
            .iter()
            .zip(&traj.momenta)
            .map(|(q, p)| hamiltonian(&chart, q, p))
            .collect::<Result<Vec<f64>>>()?;
        let normals: Vec<usize> = frame.normal_indices().collect();
        let energy_cost_zero = chart.is_flat() && chart.potential().is_zero();
        let omega_zero = normals.iter().all(|&i| normals.iter().all(|&j| frame.connection.iter().all(|o| o[(i, j)] == 0.0)));
        let drift_free = params.xi.is_zero() && energy_cost_zero && !params.confined() && omega_zero;
        let ratios = bridge_ratios(grid);
        Ok(Self { chart, spec, frame, params, normals, ratios, base_energy, energy_cost_zero, drift_free })
    }

    pub fn chart(&self) -> &MetricChart {
        &self.chart
    }

    pub fn spec(&self) -> &TubeSpec {
        &self.spec
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn params(&self) -> &SdeParams {
        &self.params
    }

    pub fn trajectory(&self) -> &ClassicalTrajectory {
        &self.spec.trajectory
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.spec.trajectory.grid
    }

    pub fn normal_dim(&self) -> usize {
        self.normals.len()
    }

    fn normal_vector(&self, k: usize, chi: &[f64]) -> DVector<f64> {
        let e = &self.frame.vectors[k];
        let mut v = DVector::zeros(e.nrows());
        for (c, &j) in chi.iter().zip(&self.normals) {
            v.axpy(*c, &e.column(j), 1.0);
        }
        v
    }

    fn energy_cost_at(&self, k: usize, chi: &[f64]) -> Result<f64> {
        let v = self.normal_vector(k, chi);
        let moved = exp_map(&self.chart, &self.spec.trajectory.points[k], &v, &ExpOptions::default())?;
        Ok((self.base_energy[k] - hamiltonian(&self.chart, &moved, &self.spec.trajectory.momenta[k])?).abs())
    }

    /// `b = −(1/σ²)∇U − Ωχ`, tamed as `b/(1 + Δt|b|)`.
    fn drift(&self, k: usize, chi: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|b| *b = 0.0);
        if self.drift_free {
            return Ok(());
        }
        let d = chi.len();
        let t = self.grid().times()[k];
        let r = norm(chi);
        let xi = self.params.xi.at(t);
        let mut grad: Vec<f64> = chi.iter().map(|c| xi * c).collect();
        if !self.energy_cost_zero && r >= ZERO_DISPLACEMENT {
            let mut probe = chi.to_vec();
            for i in 0..d {
                let h = fd_step(chi[i]);
                probe[i] = chi[i] + h;
                let up = self.energy_cost_at(k, &probe)?;
                probe[i] = chi[i] - h;
                let down = self.energy_cost_at(k, &probe)?;
                probe[i] = chi[i];
                grad[i] += (up - down) / (2.0 * h);
            }
        }
        if self.params.confined() && r >= ZERO_DISPLACEMENT {
            let du = barrier_gradient_radius(r, self.spec.radius, &self.params)?;
            for i in 0..d {
                grad[i] += du * chi[i] / r;
            }
        }
        let s2 = self.params.sigma * self.params.sigma;
        let omega = &self.frame.connection[k];
        let mut size = 0.0;
        for i in 0..d {
            let mut b = -grad[i] / s2;
            for j in 0..d {
                b -= omega[(self.normals[i], self.normals[j])] * chi[j];
            }
            out[i] = b;
            size += b * b;
        }
        if !size.is_finite() {
            return Err(Error::Numerical(format!("non-finite drift at t = {t}")));
        }
        let tame = 1.0 / (1.0 + self.grid().dt(k.min(self.grid().steps() - 1)) * size.sqrt());
        out.iter_mut().for_each(|b| *b *= tame);
        Ok(())
    }

    /// Draws one fluctuation path.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<FluctuationPath> {
        let d = self.normal_dim();
        let (normal_components, log_girsanov, in_tube, resampled) = match self.params.route {
            SampleRoute::Reweighted => self.sample_reweighted(rng)?,
            SampleRoute::Drifted => self.sample_drifted(rng)?,
        };
        let grid = self.grid();
        let raw = sample_brownian_bridge(1, grid, self.params.sigma, rng);
        let (longitudinal, gauge_mode) = gauge_fix_longitudinal(grid, &raw);
        Ok(FluctuationPath {
            normal_dim: d,
            normal_components,
            longitudinal,
            gauge_mode,
            log_girsanov,
            action_integral: 0.0,
            in_tube,
            resampled,
            route: self.params.route,
        })
    }

    fn sample_reweighted<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, f64, bool, usize)> {
        let d = self.normal_dim();
        let grid = self.grid();
        let chi = sample_brownian_bridge(d, grid, self.params.sigma, rng);
        let max_r = (0..grid.len()).map(|k| norm(&chi[k * d..(k + 1) * d])).fold(0.0, f64::max);
        let in_tube = max_r < self.spec.radius;
        if d == 0 || self.drift_free {
            return Ok((chi, 0.0, in_tube, 0));
        }
        if self.params.confined() && !in_tube {
            // μ puts no mass outside the tube
            return Ok((chi, f64::NEG_INFINITY, false, 0));
        }
        let steps = grid.steps();
        let mut increments = vec![0.0; steps * d];
        let mut drifts = vec![0.0; steps * d];
        let mut dtau = vec![0.0; steps];
        for k in 0..steps {
            let rho = self.ratios[k];
            dtau[k] = grid.dt(k) * rho;
            for i in 0..d {
                increments[k * d + i] = (chi[(k + 1) * d + i] - chi[k * d + i] * rho) / self.params.sigma;
            }
            self.drift(k, &chi[k * d..(k + 1) * d], &mut drifts[k * d..(k + 1) * d])?;
        }
        let lw = girsanov_log_weight(&increments, &drifts, &dtau, d, self.params.sigma);
        Ok((chi, lw, in_tube, 0))
    }

    fn sample_drifted<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, f64, bool, usize)> {
        let d = self.normal_dim();
        let grid = self.grid();
        let steps = grid.steps();
        let sigma = self.params.sigma;
        let radius = self.spec.radius;
        let confined = self.params.confined();
        let mut chi = vec![0.0; grid.len() * d];
        let mut b = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut cand = vec![0.0; d];
        let mut lw = 0.0;
        let mut in_tube = true;
        let mut resampled = 0;
        for k in 0..steps {
            let rho = self.ratios[k];
            let dt = grid.dt(k);
            let dtau = dt * rho;
            let s = sigma * dtau.sqrt();
            let cur = chi[k * d..(k + 1) * d].to_vec();
            if in_tube || !confined {
                self.drift(k, &cur, &mut b)?;
            } else {
                b.iter_mut().for_each(|x| *x = 0.0);
            }
            for i in 0..d {
                mean[i] = (cur[i] + b[i] * dt) * rho;
            }
            let mut attempts = 0;
            loop {
                for i in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    cand[i] = mean[i] + s * z;
                }
                let inside = norm(&cand) < radius;
                if inside || !confined || !in_tube || k + 1 == steps {
                    in_tube &= inside || k + 1 == steps;
                    break;
                }
                if attempts == self.params.max_retries {
                    in_tube = false;
                    break;
                }
                attempts += 1;
                resampled += 1;
            }
            if k + 1 == steps {
                cand.iter_mut().for_each(|x| *x = 0.0);
            }
            chi[(k + 1) * d..(k + 2) * d].copy_from_slice(&cand);
            let inc: Vec<f64> = (0..d).map(|i| (cand[i] - cur[i] * rho) / sigma).collect();
            lw += girsanov_log_weight(&inc, &b, &[dtau], d, sigma);
        }
        Ok((chi, lw, in_tube, resampled))
    }

    /// Coordinate displacement `Σχ^iE_i + ℓ·u` at node `k`.
    fn displacement(&self, k: usize, chi: &[f64], longitudinal: f64) -> DVector<f64> {
        let mut v = self.normal_vector(k, chi);
        v.axpy(longitudinal, &self.frame.vectors[k].column(self.frame.tangent_index), 1.0);
        v
    }

    fn assemble_with(&self, fluct: &FluctuationPath, longitudinal: &[f64]) -> Result<DiscretePath> {
        let traj = self.trajectory();
        let n = traj.dim();
        let nodes = traj.grid.len();
        if fluct.nodes() != nodes || fluct.normal_dim != self.normal_dim() {
            return Err(Error::Shape("fluctuation does not match the trajectory grid".into()));
        }
        let mut data = Vec::with_capacity(nodes * n);
        for k in 0..nodes {
            if k == 0 || k == nodes - 1 {
                data.extend(traj.points[k].iter());
                continue;
            }
            let v = self.displacement(k, fluct.chi(k), longitudinal[k]);
            let x = exp_map(&self.chart, &traj.points[k], &v, &ExpOptions::default())?;
            data.extend(x.iter());
        }
        DiscretePath::new(traj.grid.clone(), n, data)
    }

    /// `X(t_k) = exp_{γ₀(t_k)}(Σχ^iE_i + (p_L + cφ)u)`; the gauge zero mode
    /// `cφ` is restored so that X carries the full bridge law.
    pub fn assemble(&self, fluct: &FluctuationPath) -> Result<DiscretePath> {
        let full = fluct.longitudinal_with_mode(self.grid());
        self.assemble_with(fluct, &full)
    }

    /// Same as [`Self::assemble`] but restricted to the gauge slice `∫p_L = 0`.
    pub fn assemble_gauge_slice(&self, fluct: &FluctuationPath) -> Result<DiscretePath> {
        self.assemble_with(fluct, &fluct.longitudinal)
    }
}

/// One-shot form of [`FluctuationSampler::sample`].
pub fn simulate_fluctuation<R: Rng + ?Sized>(
    chart: &MetricChart,
    frame: &Frame,
    spec: &TubeSpec,
    params: &SdeParams,
    rng: &mut R,
) -> Result<FluctuationPath> {
    FluctuationSampler::new(chart.clone(), spec.clone(), frame.clone(), params.clone())?.sample(rng)
}

/// One-shot form of [`FluctuationSampler::assemble`].
pub fn assemble_path(chart: &MetricChart, spec: &TubeSpec, frame: &Frame, fluct: &FluctuationPath) -> Result<DiscretePath> {
    let params = SdeParams { barrier_strength: 0.0, ..SdeParams::default() };
    FluctuationSampler::new(chart.clone(), spec.clone(), frame.clone(), params)?.assemble(fluct)
}
