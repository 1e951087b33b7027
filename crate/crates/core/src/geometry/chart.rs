use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type MetricFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Central-difference step for coordinate `x`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

#[derive(Clone)]
pub enum MetricKind {
    Flat,
    User(MetricFn),
}

impl fmt::Debug for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Flat => f.write_str("Flat"),
            MetricKind::User(_) => f.write_str("User(..)"),
        }
    }
}

/// Potential energy `V(q)`, optionally with an analytic gradient.
#[derive(Clone)]
pub struct Potential {
    name: String,
    value: ScalarFn,
    gradient: Option<GradientFn>,
    identically_zero: bool,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("name", &self.name).finish()
    }
}

impl Potential {
    pub fn zero() -> Self {
        Self {
            name: "free".into(),
            value: Arc::new(|_| 0.0),
            gradient: Some(Arc::new(|q: &DVector<f64>| DVector::zeros(q.len()))),
            identically_zero: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            name: format!("constant({c})"),
            value: Arc::new(move |_| c),
            gradient: Some(Arc::new(|q: &DVector<f64>| DVector::zeros(q.len()))),
            identically_zero: c == 0.0,
        }
    }

    /// `V(q) = ½ ω² |q|²`.
    pub fn harmonic(omega: f64) -> Self {
        let w2 = omega * omega;
        Self {
            name: format!("harmonic({omega})"),
            value: Arc::new(move |q| 0.5 * w2 * q.norm_squared()),
            gradient: Some(Arc::new(move |q: &DVector<f64>| q * w2)),
            identically_zero: false,
        }
    }

    /// `V(q) = λ |q|⁴`.
    pub fn quartic(lambda: f64) -> Self {
        Self {
            name: format!("quartic({lambda})"),
            value: Arc::new(move |q| lambda * q.norm_squared().powi(2)),
            gradient: Some(Arc::new(move |q: &DVector<f64>| q * (4.0 * lambda * q.norm_squared()))),
            identically_zero: false,
        }
    }

    /// Piecewise-linear potential on the first coordinate, from sorted
    /// `(x, V)` samples; constant extrapolation outside the table.
    pub fn table(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain("potential table needs at least two rows".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain("potential table abscissae must be strictly increasing".into()));
        }
        let table = Arc::new(samples);
        let t = Arc::clone(&table);
        let value = move |q: &DVector<f64>| {
            let x = q[0];
            let s = &t;
            if x <= s[0].0 {
                return s[0].1;
            }
            if x >= s[s.len() - 1].0 {
                return s[s.len() - 1].1;
            }
            let i = s.partition_point(|p| p.0 <= x) - 1;
            let (x0, v0) = s[i];
            let (x1, v1) = s[i + 1];
            v0 + (v1 - v0) * (x - x0) / (x1 - x0)
        };
        Ok(Self {
            name: "table".into(),
            value: Arc::new(value),
            gradient: None,
            identically_zero: false,
        })
    }

    pub fn custom<F>(name: &str, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), value: Arc::new(f), gradient: None, identically_zero: false }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_zero(&self) -> bool {
        self.identically_zero
    }

    #[inline]
    pub fn value(&self, q: &DVector<f64>) -> f64 {
        (self.value)(q)
    }

    pub fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.gradient {
            return g(q);
        }
        let mut grad = DVector::zeros(q.len());
        let mut x = q.clone();
        for i in 0..q.len() {
            let h = fd_step(q[i]);
            x[i] = q[i] + h;
            let fp = self.value(&x);
            x[i] = q[i] - h;
            let fm = self.value(&x);
            x[i] = q[i];
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }
}

/// Christoffel symbols `Γ^k_ij` at a point, stored as `gamma[k][(i, j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    pub gamma: Vec<DMatrix<f64>>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self { gamma: vec![DMatrix::zeros(n, n); n] }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// `Γ^k_ij u^i v^j`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.gamma.iter().map(|g| u.dot(&(g * v))))
    }

    pub fn is_zero(&self) -> bool {
        self.gamma.iter().all(|g| g.iter().all(|&x| x == 0.0))
    }
}

/// Coordinate chart on ℝⁿ with metric `g_ij(q)` and potential `V(q)`.
#[derive(Clone, Debug)]
pub struct MetricChart {
    dim: usize,
    metric: MetricKind,
    potential: Potential,
    injectivity_guard: f64,
}

impl MetricChart {
    pub fn flat(dim: usize, potential: Potential) -> Self {
        assert!(dim > 0, "chart dimension must be positive");
        Self { dim, metric: MetricKind::Flat, potential, injectivity_guard: f64::INFINITY }
    }

    pub fn user<F>(dim: usize, metric: F, potential: Potential) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim > 0, "chart dimension must be positive");
        Self { dim, metric: MetricKind::User(Arc::new(metric)), potential, injectivity_guard: 1.0 }
    }

    /// Conformally flat metric `g(q) = exp(2α q_0)·I`.
    pub fn conformal_exp(dim: usize, alpha: f64, potential: Potential) -> Self {
        Self::user(dim, move |q| DMatrix::identity(q.len(), q.len()) * (2.0 * alpha * q[0]).exp(), potential)
    }

    pub fn with_injectivity_guard(mut self, guard: f64) -> Self {
        self.injectivity_guard = guard;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.metric, MetricKind::Flat)
    }

    pub fn metric_kind(&self) -> &MetricKind {
        &self.metric
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn injectivity_guard(&self) -> f64 {
        self.injectivity_guard
    }

    pub fn metric(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match &self.metric {
            MetricKind::Flat => DMatrix::identity(self.dim, self.dim),
            MetricKind::User(g) => g(q),
        }
    }

    pub fn inverse_metric(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.metric {
            MetricKind::Flat => Ok(DMatrix::identity(self.dim, self.dim)),
            MetricKind::User(_) => {
                let g = self.metric(q);
                g.cholesky()
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::DegenerateMetric(q.iter().copied().collect()))
            }
        }
    }

    /// Smallest eigenvalue of the (symmetrised) metric is at least `tol`.
    pub fn is_positive_definite(&self, q: &DVector<f64>, tol: f64) -> bool {
        let g = self.metric(q);
        let sym = (&g + g.transpose()) * 0.5;
        if (&g - &sym).amax() > 1e-12 * (1.0 + g.amax()) {
            return false;
        }
        sym.symmetric_eigenvalues().iter().all(|&l| l >= tol)
    }

    pub fn inner(&self, q: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match &self.metric {
            MetricKind::Flat => u.dot(v),
            MetricKind::User(_) => u.dot(&(self.metric(q) * v)),
        }
    }

    pub fn norm(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.inner(q, v, v).max(0.0).sqrt()
    }

    /// `∂_l g` for each coordinate `l`, by central differences.
    pub fn metric_derivatives(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        match &self.metric {
            MetricKind::Flat => vec![DMatrix::zeros(self.dim, self.dim); self.dim],
            MetricKind::User(g) => {
                let mut x = q.clone();
                (0..self.dim)
                    .map(|l| {
                        let h = fd_step(q[l]);
                        x[l] = q[l] + h;
                        let gp = g(&x);
                        x[l] = q[l] - h;
                        let gm = g(&x);
                        x[l] = q[l];
                        (gp - gm) / (2.0 * h)
                    })
                    .collect()
            }
        }
    }

    /// `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`; exactly zero on
    /// the flat chart.
    pub fn christoffel(&self, q: &DVector<f64>) -> Result<Christoffel> {
        let n = self.dim;
        if self.is_flat() {
            return Ok(Christoffel::zeros(n));
        }
        let ginv = self.inverse_metric(q)?;
        let dg = self.metric_derivatives(q);
        // lowered[l](i, j) = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
        let lowered: Vec<DMatrix<f64>> = (0..n)
            .map(|l| {
                DMatrix::from_fn(n, n, |i, j| 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]))
            })
            .collect();
        let gamma = (0..n)
            .map(|k| {
                let mut m = DMatrix::zeros(n, n);
                for (l, low) in lowered.iter().enumerate() {
                    let c = ginv[(k, l)];
                    if c != 0.0 {
                        m += low * c;
                    }
                }
                // exact symmetry in (i, j)
                (&m + m.transpose()) * 0.5
            })
            .collect();
        Ok(Christoffel { gamma })
    }
}
