use nalgebra::{DMatrix, DVector};

use super::chart::MetricChart;
use super::hermite;
use super::trajectory::ClassicalTrajectory;
use crate::error::{Error, Result};

/// Speeds below this are treated as a rest point.
pub const V_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FrameOptions {
    pub reortho_every: usize,
    /// Orthonormality tolerance; `None` picks 1e-8 (flat) or 1e-6 (curved).
    pub frame_tol: Option<f64>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { reortho_every: 8, frame_tol: None }
    }
}

/// Parallel g-orthonormal frame along a classical trajectory.
///
/// Column `tangent_index` starts along γ̇₀; the remaining columns span the
/// normal directions at `t = 0`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub vectors: Vec<DMatrix<f64>>,
    pub tangent_index: usize,
    /// Unit tangent γ̇₀/|γ̇₀|, frozen across rest points.
    pub unit_tangents: Vec<DVector<f64>>,
    /// `Ω_ij(t_k) = g(∇_t E_i, E_j)`, estimated by central differences.
    pub connection: Vec<DMatrix<f64>>,
    pub frame_tol: f64,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.vectors[0].nrows()
    }

    /// Indices of the normal columns.
    pub fn normal_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&i| i != self.tangent_index)
    }

    /// Coordinate vector `Σ_i c_i E_i(t_k)`.
    pub fn to_coordinates(&self, k: usize, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.vectors[k] * coeffs
    }

    /// Largest `|g(E_i, E_j) − δ_ij|` over all nodes.
    pub fn orthonormality_defect(&self, chart: &MetricChart, traj: &ClassicalTrajectory) -> f64 {
        self.vectors
            .iter()
            .zip(&traj.points)
            .map(|(e, q)| gram_defect(chart, q, e))
            .fold(0.0, f64::max)
    }

    pub fn max_connection(&self) -> f64 {
        self.connection.iter().map(|o| o.amax()).fold(0.0, f64::max)
    }
}

fn gram_defect(chart: &MetricChart, q: &DVector<f64>, e: &DMatrix<f64>) -> f64 {
    let n = e.ncols();
    let gram = e.transpose() * chart.metric(q) * e;
    (gram - DMatrix::identity(n, n)).amax()
}

/// Modified Gram-Schmidt in the g-inner product; keeps column order.
fn g_orthonormalize(chart: &MetricChart, q: &DVector<f64>, e: &mut DMatrix<f64>) -> Result<()> {
    let g = chart.metric(q);
    let n = e.ncols();
    for i in 0..n {
        let mut col = e.column(i).into_owned();
        for j in 0..i {
            let ej = e.column(j).into_owned();
            let c = col.dot(&(&g * &ej));
            col -= ej * c;
        }
        let norm = col.dot(&(&g * &col)).max(0.0).sqrt();
        if !(norm > 1e-300) {
            return Err(Error::DegenerateMetric(q.iter().copied().collect()));
        }
        e.set_column(i, &(col / norm));
    }
    Ok(())
}

fn initial_frame(chart: &MetricChart, traj: &ClassicalTrajectory) -> Result<DMatrix<f64>> {
    let n = chart.dim();
    let q0 = &traj.points[0];
    let lead = traj
        .velocities
        .iter()
        .zip(&traj.points)
        .find(|(v, q)| chart.norm(q, v) >= V_TOL)
        .map(|(v, _)| v.clone())
        .unwrap_or_else(|| {
            let mut e = DVector::zeros(n);
            e[0] = 1.0;
            e
        });
    let g = chart.metric(q0);
    let mut cols = vec![lead];
    for i in 0..n {
        if cols.len() == n {
            break;
        }
        let mut cand = DVector::zeros(n);
        cand[i] = 1.0;
        for c in &cols {
            let cn = c.dot(&(&g * c));
            cand -= c * (cand.dot(&(&g * c)) / cn);
        }
        if cand.dot(&(&g * &cand)).sqrt() > 1e-6 {
            cols.push(cand);
        }
    }
    let mut e = DMatrix::from_columns(&cols);
    g_orthonormalize(chart, q0, &mut e)?;
    Ok(e)
}

fn transport_rhs(chart: &MetricChart, q: &DVector<f64>, qdot: &DVector<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gamma = chart.christoffel(q)?;
    let mut out = DMatrix::zeros(e.nrows(), e.ncols());
    for j in 0..e.ncols() {
        let col = e.column(j).into_owned();
        out.set_column(j, &(-gamma.contract(qdot, &col)));
    }
    Ok(out)
}

/// Parallel-transports a g-orthonormal frame along `traj` by integrating
/// `Ė + Γ(γ̇₀)E = 0` with RK4 on Hermite-interpolated trajectory data.
pub fn parallel_frame(chart: &MetricChart, traj: &ClassicalTrajectory, opts: &FrameOptions) -> Result<Frame> {
    let frame_tol = opts.frame_tol.unwrap_or(if chart.is_flat() { 1e-8 } else { 1e-6 });
    let k_nodes = traj.points.len();
    for q in &traj.points {
        if !chart.is_positive_definite(q, 1e-12) {
            return Err(Error::DegenerateMetric(q.iter().copied().collect()));
        }
    }

    let e0 = initial_frame(chart, traj)?;
    let mut vectors = Vec::with_capacity(k_nodes);
    vectors.push(e0);
    let reortho = opts.reortho_every.max(1);
    for k in 0..k_nodes - 1 {
        let e = &vectors[k];
        let next = if chart.is_flat() {
            e.clone()
        } else {
            let h = traj.grid.dt(k);
            let (q0, v0, q1, v1) = (&traj.points[k], &traj.velocities[k], &traj.points[k + 1], &traj.velocities[k + 1]);
            let at = |s: f64| hermite(q0, v0, q1, v1, h, s);
            let (qa, va) = at(0.0);
            let (qm, vm) = at(0.5);
            let (qb, vb) = at(1.0);
            let k1 = transport_rhs(chart, &qa, &va, e)?;
            let k2 = transport_rhs(chart, &qm, &vm, &(e + &k1 * (0.5 * h)))?;
            let k3 = transport_rhs(chart, &qm, &vm, &(e + &k2 * (0.5 * h)))?;
            let k4 = transport_rhs(chart, &qb, &vb, &(e + &k3 * h))?;
            let mut next = e + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if (k + 1) % reortho == 0 {
                g_orthonormalize(chart, q1, &mut next)?;
            }
            next
        };
        vectors.push(next);
    }

    let drift = vectors
        .iter()
        .zip(&traj.points)
        .map(|(e, q)| gram_defect(chart, q, e))
        .fold(0.0, f64::max);
    if drift > frame_tol {
        return Err(Error::FrameIntegration { drift, tolerance: frame_tol });
    }

    let mut unit_tangents = Vec::with_capacity(k_nodes);
    let mut last = vectors[0].column(0).into_owned();
    for (v, q) in traj.velocities.iter().zip(&traj.points) {
        let s = chart.norm(q, v);
        if s >= V_TOL {
            last = v / s;
        }
        unit_tangents.push(last.clone());
    }

    let times = traj.grid.times();
    let connection = (0..k_nodes)
        .map(|k| -> Result<DMatrix<f64>> {
            let (a, b) = if k == 0 { (0, 1) } else if k == k_nodes - 1 { (k - 1, k) } else { (k - 1, k + 1) };
            let de = (&vectors[b] - &vectors[a]) / (times[b] - times[a]);
            let q = &traj.points[k];
            let cov = de - transport_rhs(chart, q, &traj.velocities[k], &vectors[k])?;
            let g = chart.metric(q);
            Ok(cov.transpose() * g * &vectors[k])
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Frame { vectors, tangent_index: 0, unit_tangents, connection, frame_tol })
}

fn derivative(values: &[DVector<f64>], times: &[f64], k: usize) -> DVector<f64> {
    let last = values.len() - 1;
    let (a, b) = if k == 0 { (0, 1) } else if k == last { (last - 1, last) } else { (k - 1, k + 1) };
    (&values[b] - &values[a]) / (times[b] - times[a])
}

/// `‖u‖²_{H¹} = ∫ g(u,u) + g(∇_t u, ∇_t u) dt` for a coordinate vector field
/// along the trajectory, `∇_t u = u̇ + Γ(γ̇₀, u)`.
pub fn coordinate_h1_norm_sq(chart: &MetricChart, traj: &ClassicalTrajectory, field: &[DVector<f64>]) -> Result<f64> {
    let times = traj.grid.times();
    let mut integrand = Vec::with_capacity(field.len());
    for k in 0..field.len() {
        let q = &traj.points[k];
        let cov = derivative(field, times, k) + chart.christoffel(q)?.contract(&traj.velocities[k], &field[k]);
        integrand.push(chart.inner(q, &field[k], &field[k]) + chart.inner(q, &cov, &cov));
    }
    Ok(traj.grid.trapezoid(&integrand))
}

/// `Σ_i (‖u^i‖² + ‖u̇^i‖²)` for frame coefficients `u^i(t_k)`.
pub fn frame_h1_norm_sq(traj: &ClassicalTrajectory, coeffs: &[DVector<f64>]) -> f64 {
    let times = traj.grid.times();
    let integrand: Vec<f64> = (0..coeffs.len())
        .map(|k| coeffs[k].norm_squared() + derivative(coeffs, times, k).norm_squared())
        .collect();
    traj.grid.trapezoid(&integrand)
}
