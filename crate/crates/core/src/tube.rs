//! The restricted path space: discrete paths pinned at the trajectory
//! endpoints, the action functional, H¹ distances and the admissibility
//! probe built on the resolvent `f(E) = 1/(δE² − (E − E₀)²)`.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hamiltonian, ClassicalTrajectory, MetricChart};
use crate::grid::TimeGrid;

/// A path sampled on a time grid, stored row-major (`dim` values per node).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl DiscretePath {
    pub fn new(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != grid.len() * dim {
            return Err(Error::Shape(format!(
                "expected {} values ({} nodes × {dim}), got {}",
                grid.len() * dim,
                grid.len(),
                data.len()
            )));
        }
        Ok(Self { grid, dim, data })
    }

    pub fn from_fn<F: FnMut(f64) -> Vec<f64>>(grid: TimeGrid, dim: usize, mut f: F) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * dim);
        for &t in grid.times() {
            let p = f(t);
            if p.len() != dim {
                return Err(Error::Shape(format!("point of dimension {} in a {dim}-dimensional path", p.len())));
            }
            data.extend(p);
        }
        Self::new(grid, dim, data)
    }

    pub fn from_trajectory(traj: &ClassicalTrajectory) -> Self {
        let dim = traj.dim();
        let data = traj.points.iter().flat_map(|q| q.iter().copied()).collect();
        Self { grid: traj.grid.clone(), dim, data }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn point_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn point_vec(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(k))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn start(&self) -> &[f64] {
        self.point(0)
    }

    pub fn end(&self) -> &[f64] {
        self.point(self.len() - 1)
    }

    /// Second-order finite-difference velocities at every node.
    pub fn velocities(&self) -> Vec<f64> {
        let n = self.len();
        let d = self.dim;
        let t = self.grid.times();
        let mut out = vec![0.0; n * d];
        if n == 2 {
            let h = t[1] - t[0];
            for i in 0..d {
                let v = (self.data[d + i] - self.data[i]) / h;
                out[i] = v;
                out[d + i] = v;
            }
            return out;
        }
        // three-point weights for f'(t_c) from nodes (a, b, c) at offsets
        let weights = |xa: f64, xb: f64, xc: f64, at: f64| {
            let wa = ((at - xb) + (at - xc)) / ((xa - xb) * (xa - xc));
            let wb = ((at - xa) + (at - xc)) / ((xb - xa) * (xb - xc));
            let wc = ((at - xa) + (at - xb)) / ((xc - xa) * (xc - xb));
            (wa, wb, wc)
        };
        for k in 0..n {
            let (a, b, c) = if k == 0 { (0, 1, 2) } else if k == n - 1 { (n - 3, n - 2, n - 1) } else { (k - 1, k, k + 1) };
            let (wa, wb, wc) = weights(t[a], t[b], t[c], t[k]);
            for i in 0..d {
                out[k * d + i] = wa * self.data[a * d + i] + wb * self.data[b * d + i] + wc * self.data[c * d + i];
            }
        }
        out
    }

    fn check_same_shape(&self, other: &DiscretePath) -> Result<()> {
        if self.dim != other.dim || self.grid.len() != other.grid.len() {
            return Err(Error::Shape(format!(
                "paths differ in shape: {}×{} vs {}×{}",
                self.len(),
                self.dim,
                other.len(),
                other.dim
            )));
        }
        if self.grid.times().iter().zip(other.grid.times()).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
            return Err(Error::Shape("paths live on different grids".into()));
        }
        Ok(())
    }

    /// Writes the `t,q1,...,qn` CSV format.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=self.dim).map(|i| format!("q{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (k, &t) in self.grid.times().iter().enumerate() {
            let row: Vec<String> = std::iter::once(t).chain(self.point(k).iter().copied()).map(|x| format!("{x:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads one path in the `t,q1,...,qn` format.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut paths = read_paths_csv(r)?;
        match paths.len() {
            1 => Ok(paths.remove(0)),
            n => Err(Error::Parse { row: 1, message: format!("expected a single path, found {n}") }),
        }
    }
}

/// Reads one or more paths. With a leading `path` column rows are grouped by
/// path id (in order of first appearance); otherwise the file holds one path.
pub fn read_paths_csv<R: BufRead>(r: R) -> Result<Vec<DiscretePath>> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
    let (_, header) = lines.next().ok_or(Error::Parse { row: 1, message: "empty file".into() })?;
    let header = header?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let grouped = cols.first() == Some(&"path");
    let offset = usize::from(grouped);
    if cols.get(offset) != Some(&"t") || cols.len() < offset + 2 {
        return Err(Error::Parse { row: 1, message: format!("header must be `t,q1,...,qn`, got `{header}`") });
    }
    for (i, c) in cols[offset + 1..].iter().enumerate() {
        if *c != format!("q{}", i + 1) {
            return Err(Error::Parse { row: 1, message: format!("unexpected column `{c}`") });
        }
    }
    let dim = cols.len() - offset - 1;
    let mut order: Vec<String> = Vec::new();
    let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse { row, message: format!("expected {} fields, found {}", cols.len(), fields.len()) });
        }
        let id = if grouped { fields[0].to_string() } else { String::new() };
        let slot = match order.iter().position(|p| *p == id) {
            Some(s) => s,
            None => {
                order.push(id);
                rows.push((Vec::new(), Vec::new()));
                order.len() - 1
            }
        };
        let nums = fields[offset..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { row, message: format!("`{f}`: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        let (times, data) = &mut rows[slot];
        if let Some(&last) = times.last() {
            if !(nums[0] > last) {
                return Err(Error::Parse { row, message: "times must be strictly increasing".into() });
            }
        }
        times.push(nums[0]);
        data.extend_from_slice(&nums[1..]);
    }
    rows.into_iter()
        .map(|(times, data)| {
            let grid = TimeGrid::from_times(times).map_err(|e| Error::Parse { row: 0, message: e.to_string() })?;
            DiscretePath::new(grid, dim, data)
        })
        .collect()
}

/// Bounds that define the tube around a classical trajectory.
#[derive(Debug, Clone)]
pub struct TubeSpec {
    pub trajectory: ClassicalTrajectory,
    /// Action-deviation bound η (action units).
    pub eta_action: f64,
    /// Pointwise cap on the normal displacement (length units).
    pub radius: f64,
    pub hbar: f64,
    /// Energy half-width δE.
    pub delta_e: f64,
    /// Reference energy E₀.
    pub e0: f64,
    pub coercivity: f64,
    pub pole_guard: f64,
    pub endpoint_tol: f64,
}

/// Optional overrides; unset fields follow η = ħ/2, r = √(ħ/(2c)), δE = η/T.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TubeOverrides {
    pub eta_action: Option<f64>,
    pub radius: Option<f64>,
    pub delta_e: Option<f64>,
    pub coercivity: Option<f64>,
    pub pole_guard: Option<f64>,
}

pub const DEFAULT_POLE_GUARD: f64 = 0.05;

impl TubeSpec {
    pub fn new(trajectory: ClassicalTrajectory, hbar: f64, overrides: &TubeOverrides) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::Domain(format!("ħ must be positive, got {hbar}")));
        }
        let coercivity = overrides.coercivity.unwrap_or(1.0);
        let eta_action = overrides.eta_action.unwrap_or(hbar / 2.0);
        let radius = match overrides.radius {
            Some(r) => r,
            None => default_radius(hbar, coercivity)?,
        };
        let delta_e = overrides.delta_e.unwrap_or(eta_action / trajectory.duration());
        let pole_guard = overrides.pole_guard.unwrap_or(DEFAULT_POLE_GUARD);
        for (name, v) in [("radius", radius), ("eta_action", eta_action), ("delta_e", delta_e), ("coercivity", coercivity)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(pole_guard > 0.0 && pole_guard < 1.0) {
            return Err(Error::Domain(format!("pole_guard must lie in (0, 1), got {pole_guard}")));
        }
        let e0 = trajectory.energy;
        Ok(Self { trajectory, eta_action, radius, hbar, delta_e, e0, coercivity, pole_guard, endpoint_tol: 1e-9 })
    }

    pub fn duration(&self) -> f64 {
        self.trajectory.duration()
    }

    pub fn reference_path(&self) -> DiscretePath {
        DiscretePath::from_trajectory(&self.trajectory)
    }
}

/// Trapezoidal action `∫ ½ g(q)q̇·q̇ − V(q) dt` with finite-difference velocities.
pub fn action(chart: &MetricChart, path: &DiscretePath) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::Shape("action needs at least two nodes".into()));
    }
    if path.dim() != chart.dim() {
        return Err(Error::Shape(format!("path dimension {} vs chart dimension {}", path.dim(), chart.dim())));
    }
    let vel = path.velocities();
    let d = path.dim();
    let lagrangian: Vec<f64> = (0..path.len())
        .map(|k| {
            let q = path.point_vec(k);
            let v = DVector::from_column_slice(&vel[k * d..(k + 1) * d]);
            0.5 * chart.inner(&q, &v, &v) - chart.potential().value(&q)
        })
        .collect();
    Ok(path.grid().trapezoid(&lagrangian))
}

/// `√∫ |γ − γ₀|² + |γ̇ − γ̇₀|² dt` on the shared grid.
pub fn h1_distance(path: &DiscretePath, other: &DiscretePath) -> Result<f64> {
    path.check_same_shape(other)?;
    let d = path.dim();
    let va = path.velocities();
    let vb = other.velocities();
    let integrand: Vec<f64> = (0..path.len())
        .map(|k| {
            let mut s = 0.0;
            for i in 0..d {
                let dq = path.data[k * d + i] - other.data[k * d + i];
                let dv = va[k * d + i] - vb[k * d + i];
                s += dq * dq + dv * dv;
            }
            s
        })
        .collect();
    Ok(path.grid().trapezoid(&integrand).max(0.0).sqrt())
}

/// H¹ tube radius `√(ħ/(2c))`.
pub fn default_radius(hbar: f64, coercivity: f64) -> Result<f64> {
    if !(hbar > 0.0) || !(coercivity > 0.0) {
        return Err(Error::Domain(format!("ħ and c must be positive, got ħ = {hbar}, c = {coercivity}")));
    }
    Ok((hbar / (2.0 * coercivity)).sqrt())
}

/// `(ΔS, |ΔS| ≤ η)` relative to the reference trajectory.
pub fn action_deviation(chart: &MetricChart, path: &DiscretePath, spec: &TubeSpec) -> Result<(f64, bool)> {
    let reference = spec.reference_path();
    path.check_same_shape(&reference)?;
    let ds = action(chart, path)? - action(chart, &reference)?;
    Ok((ds, ds.abs() <= spec.eta_action))
}

/// `f(E) = 1/(δE² − (E − E₀)²)`. Energies within `½·pole_guard·δE` of a
/// pole are rejected.
pub fn resolvent(energy: f64, spec: &TubeSpec) -> Result<f64> {
    let de = energy - spec.e0;
    if (de.abs() - spec.delta_e).abs() < 0.5 * spec.pole_guard * spec.delta_e {
        return Err(Error::NearPole { energy });
    }
    Ok(1.0 / (spec.delta_e * spec.delta_e - de * de))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbeValue {
    Finite(f64),
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub value: ProbeValue,
    /// `min_t (δE − |H(γ(t)) − E₀|)`.
    pub min_margin: f64,
    pub admissible: bool,
}

impl ProbeResult {
    pub fn finite_value(&self) -> Option<f64> {
        match self.value {
            ProbeValue::Finite(v) => Some(v),
            ProbeValue::Divergent => None,
        }
    }
}

/// `(Σ f(H)·p·Δq, min margin, divergent)` along one leg, segment midpoints.
fn probe_leg(chart: &MetricChart, path: &DiscretePath, spec: &TubeSpec) -> Result<(f64, f64, bool)> {
    let d = path.dim();
    let mut sum = 0.0;
    let mut margin = f64::INFINITY;
    let mut divergent = false;
    let cutoff = (1.0 - spec.pole_guard) * spec.delta_e;
    for k in 0..path.len() - 1 {
        let h = path.grid().dt(k);
        let a = path.point(k);
        let b = path.point(k + 1);
        let mid = DVector::from_fn(d, |i, _| 0.5 * (a[i] + b[i]));
        let dq = DVector::from_fn(d, |i, _| b[i] - a[i]);
        let p = chart.metric(&mid) * (&dq / h);
        let energy = hamiltonian(chart, &mid, &p)?;
        let excess = (energy - spec.e0).abs();
        margin = margin.min(spec.delta_e - excess);
        if excess >= cutoff {
            divergent = true;
            continue;
        }
        sum += p.dot(&dq) / (spec.delta_e * spec.delta_e - (energy - spec.e0).powi(2));
    }
    Ok((sum, margin, divergent))
}

/// Evaluates `∮ f(H) p·dq` over the loop formed by `path` followed by the
/// reference trajectory traversed backwards (phase-space points of γ₀ with
/// reversed `dq`). Momenta are lifted as `p = g(q)q̇`.
pub fn admissibility_probe(chart: &MetricChart, path: &DiscretePath, spec: &TubeSpec) -> Result<ProbeResult> {
    let reference = spec.reference_path();
    path.check_same_shape(&reference)?;
    let gap = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let g = gap(path.start(), reference.start()).max(gap(path.end(), reference.end()));
    if g > spec.endpoint_tol {
        return Err(Error::Contour(g));
    }
    let (forward, m1, d1) = probe_leg(chart, path, spec)?;
    let (backward, m2, d2) = probe_leg(chart, &reference, spec)?;
    let min_margin = m1.min(m2);
    if d1 || d2 {
        return Ok(ProbeResult { value: ProbeValue::Divergent, min_margin, admissible: false });
    }
    let value = forward - backward;
    let admissible = min_margin > spec.pole_guard * spec.delta_e && value.is_finite();
    Ok(ProbeResult { value: ProbeValue::Finite(value), min_margin, admissible })
}
