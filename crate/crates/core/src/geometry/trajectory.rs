use nalgebra::{DMatrix, DVector};

use super::chart::MetricChart;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// `H(q, p) = ½ pᵀ g⁻¹(q) p + V(q)`.
pub fn hamiltonian(chart: &MetricChart, q: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    let kinetic = if chart.is_flat() {
        0.5 * p.norm_squared()
    } else {
        0.5 * p.dot(&(chart.inverse_metric(q)? * p))
    };
    Ok(kinetic + chart.potential().value(q))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySolver {
    /// Fixed duration; Newton shooting on the initial momentum. The seed
    /// selects the branch when several solutions exist.
    Shooting { seed: Option<DVector<f64>> },
    /// Fixed energy; Newton on (initial momentum, duration). The duration
    /// passed to the solver is the initial guess.
    FixedEnergy { energy: f64, seed: Option<DVector<f64>> },
}

#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    pub steps: usize,
    pub bvp_tol: f64,
    pub max_iter: usize,
    pub energy_drift_tol: f64,
    pub solver: TrajectorySolver,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            steps: 128,
            bvp_tol: 1e-10,
            max_iter: 60,
            energy_drift_tol: 1e-6,
            solver: TrajectorySolver::Shooting { seed: None },
        }
    }
}

/// Discretised solution of Hamilton's equations joining `A` to `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub grid: TimeGrid,
    pub points: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub momenta: Vec<DVector<f64>>,
    pub energy: f64,
}

impl ClassicalTrajectory {
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.points[self.points.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.grid.duration()
    }

    pub fn max_energy_drift(&self, chart: &MetricChart) -> Result<f64> {
        let mut worst = 0.0f64;
        for (q, p) in self.points.iter().zip(&self.momenta) {
            worst = worst.max((hamiltonian(chart, q, p)? - self.energy).abs());
        }
        Ok(worst)
    }
}

fn vector_field(chart: &MetricChart, q: &DVector<f64>, p: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut pdot = -chart.potential().gradient(q);
    let qdot = if chart.is_flat() {
        p.clone()
    } else {
        let qdot = chart.inverse_metric(q)? * p;
        // −∂_l(½ pᵀg⁻¹p) = ½ q̇ᵀ (∂_l g) q̇
        for (l, dg) in chart.metric_derivatives(q).iter().enumerate() {
            pdot[l] += 0.5 * qdot.dot(&(dg * &qdot));
        }
        qdot
    };
    Ok((qdot, pdot))
}

fn rk4_step(chart: &MetricChart, q: &DVector<f64>, p: &DVector<f64>, h: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let (k1q, k1p) = vector_field(chart, q, p)?;
    let (k2q, k2p) = vector_field(chart, &(q + &k1q * (0.5 * h)), &(p + &k1p * (0.5 * h)))?;
    let (k3q, k3p) = vector_field(chart, &(q + &k2q * (0.5 * h)), &(p + &k2p * (0.5 * h)))?;
    let (k4q, k4p) = vector_field(chart, &(q + &k3q * h), &(p + &k3p * h))?;
    let qn = q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
    let pn = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    if qn.iter().chain(pn.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite state in Hamiltonian flow".into()));
    }
    Ok((qn, pn))
}

type Flow = (Vec<DVector<f64>>, Vec<DVector<f64>>);

fn integrate(chart: &MetricChart, a: &DVector<f64>, p0: &DVector<f64>, grid: &TimeGrid) -> Result<Flow> {
    let mut qs = Vec::with_capacity(grid.len());
    let mut ps = Vec::with_capacity(grid.len());
    qs.push(a.clone());
    ps.push(p0.clone());
    for k in 0..grid.steps() {
        let (q, p) = rk4_step(chart, &qs[k], &ps[k], grid.dt(k))?;
        qs.push(q);
        ps.push(p);
    }
    Ok((qs, ps))
}

fn endpoint(chart: &MetricChart, a: &DVector<f64>, p0: &DVector<f64>, grid: &TimeGrid) -> Result<DVector<f64>> {
    let mut q = a.clone();
    let mut p = p0.clone();
    for k in 0..grid.steps() {
        (q, p) = rk4_step(chart, &q, &p, grid.dt(k))?;
    }
    Ok(q)
}

/// Damped Newton on a square system `F(z) = 0` with a forward-difference
/// Jacobian. Returns the root and the final residual norm.
fn damped_newton<F>(mut z: DVector<f64>, tol: f64, max_iter: usize, valid: impl Fn(&DVector<f64>) -> bool, f: F) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = z.len();
    let mut r = f(&z)?;
    let mut norm = r.norm();
    for it in 0..max_iter {
        if norm <= tol {
            return Ok(z);
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            zp[j] += h;
            let rp = f(&zp)?;
            jac.set_column(j, &((rp - &r) / h));
        }
        let step = match jac.clone().lu().solve(&(-&r)) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s,
            _ => return Err(Error::NoTrajectory { residual: norm, iterations: it }),
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &z + &step * lambda;
            if valid(&trial) {
                if let Ok(rt) = f(&trial) {
                    let nt = rt.norm();
                    if nt.is_finite() && nt < norm {
                        z = trial;
                        r = rt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoTrajectory { residual: norm, iterations: it });
        }
    }
    if norm <= tol {
        Ok(z)
    } else {
        Err(Error::NoTrajectory { residual: norm, iterations: max_iter })
    }
}

/// Solves the two-point problem `q(0) = A`, `q(T) = B` for Hamilton's
/// equations with a fourth-order Runge-Kutta flow on a uniform grid.
pub fn solve_classical_trajectory(
    chart: &MetricChart,
    a: &DVector<f64>,
    b: &DVector<f64>,
    duration: f64,
    opts: &TrajectoryOptions,
) -> Result<ClassicalTrajectory> {
    let n = chart.dim();
    if a.len() != n || b.len() != n {
        return Err(Error::Shape(format!("endpoints must have dimension {n}")));
    }
    if !(duration > 0.0) {
        return Err(Error::Domain(format!("duration must be positive, got {duration}")));
    }
    if opts.steps < 16 {
        return Err(Error::Domain(format!("grid resolution must be at least 16 steps, got {}", opts.steps)));
    }

    let default_seed = || -> DVector<f64> { chart.metric(a) * ((b - a) / duration) };
    let (p0, duration) = match &opts.solver {
        TrajectorySolver::Shooting { seed } => {
            let grid = TimeGrid::uniform(duration, opts.steps)?;
            let start = seed.clone().unwrap_or_else(default_seed);
            let p0 = damped_newton(start, opts.bvp_tol, opts.max_iter, |_| true, |p| Ok(endpoint(chart, a, p, &grid)? - b))?;
            (p0, duration)
        }
        TrajectorySolver::FixedEnergy { energy, seed } => {
            let mut z = DVector::zeros(n + 1);
            z.rows_mut(0, n).copy_from(&seed.clone().unwrap_or_else(default_seed));
            z[n] = duration;
            let steps = opts.steps;
            let z = damped_newton(
                z,
                opts.bvp_tol,
                opts.max_iter,
                |z| z[n] > 0.0,
                |z| {
                    let p0 = z.rows(0, n).into_owned();
                    let grid = TimeGrid::uniform(z[n], steps)?;
                    let mut r = DVector::zeros(n + 1);
                    r.rows_mut(0, n).copy_from(&(endpoint(chart, a, &p0, &grid)? - b));
                    r[n] = hamiltonian(chart, a, &p0)? - energy;
                    Ok(r)
                },
            )?;
            (z.rows(0, n).into_owned(), z[n])
        }
    };

    let grid = TimeGrid::uniform(duration, opts.steps)?;
    let (mut points, momenta) = integrate(chart, a, &p0, &grid)?;
    let last = points.len() - 1;
    points[last] = b.clone();
    let velocities = points
        .iter()
        .zip(&momenta)
        .map(|(q, p)| Ok(chart.inverse_metric(q)? * p))
        .collect::<Result<Vec<_>>>()?;
    let energy = hamiltonian(chart, a, &p0)?;
    let traj = ClassicalTrajectory { grid, points, velocities, momenta, energy };
    let drift = traj.max_energy_drift(chart)?;
    if drift > opts.energy_drift_tol * (1.0 + energy.abs()) {
        return Err(Error::StepSize(format!(
            "energy drift {drift:.3e} exceeds tolerance; refine the grid beyond {} steps",
            opts.steps
        )));
    }
    Ok(traj)
}
