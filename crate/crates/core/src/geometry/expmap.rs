use nalgebra::{DMatrix, DVector};

use super::chart::MetricChart;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ExpOptions {
    /// RK4 steps used to integrate the geodesic over unit parameter.
    pub steps: usize,
    /// Relative round-trip tolerance for the logarithm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ExpOptions {
    fn default() -> Self {
        Self { steps: 64, tol: 1e-10, max_iter: 50 }
    }
}

fn geodesic_rhs(chart: &MetricChart, q: &DVector<f64>, v: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok((v.clone(), -chart.christoffel(q)?.contract(v, v)))
}

/// Riemannian exponential `exp_base(v)`: exact vector addition on the flat
/// chart, RK4 geodesic integration otherwise.
pub fn exp_map(chart: &MetricChart, base: &DVector<f64>, v: &DVector<f64>, opts: &ExpOptions) -> Result<DVector<f64>> {
    if chart.is_flat() {
        return Ok(base + v);
    }
    let len = chart.norm(base, v);
    if !(len < chart.injectivity_guard()) {
        return Err(Error::OutOfChart(format!(
            "|v|_g = {len:.3e} exceeds the injectivity guard {:.3e}",
            chart.injectivity_guard()
        )));
    }
    let h = 1.0 / opts.steps as f64;
    let mut q = base.clone();
    let mut u = v.clone();
    for _ in 0..opts.steps {
        let (k1q, k1u) = geodesic_rhs(chart, &q, &u)?;
        let (k2q, k2u) = geodesic_rhs(chart, &(&q + &k1q * (0.5 * h)), &(&u + &k1u * (0.5 * h)))?;
        let (k3q, k3u) = geodesic_rhs(chart, &(&q + &k2q * (0.5 * h)), &(&u + &k2u * (0.5 * h)))?;
        let (k4q, k4u) = geodesic_rhs(chart, &(&q + &k3q * h), &(&u + &k3u * h))?;
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0);
        u += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::OutOfChart("geodesic left the chart".into()));
    }
    Ok(q)
}

/// Riemannian logarithm by Newton shooting on the initial velocity.
pub fn log_map(chart: &MetricChart, base: &DVector<f64>, target: &DVector<f64>, opts: &ExpOptions) -> Result<DVector<f64>> {
    if chart.is_flat() {
        return Ok(target - base);
    }
    let n = chart.dim();
    let mut v = target - base;
    let scale = v.norm().max(1e-300);
    for _ in 0..opts.max_iter {
        let r = exp_map(chart, base, &v, opts)? - target;
        if r.norm() <= opts.tol * scale {
            return Ok(v);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + v[j].abs());
            let mut vp = v.clone();
            vp[j] += h;
            jac.set_column(j, &((exp_map(chart, base, &vp, opts)? - target - &r) / h));
        }
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::OutOfChart("singular exponential map".into()))?;
        v += step;
    }
    Err(Error::OutOfChart(format!("logarithm did not converge for target {:?}", target.as_slice())))
}
