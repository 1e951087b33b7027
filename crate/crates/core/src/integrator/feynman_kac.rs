use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{euclidean_density, measure_weight, reduce, ActionChannel, KernelEstimate, Observable};
use crate::ensemble::{Ensemble, RunConfig};
use crate::error::{Error, Result};

pub const MAX_SERIES_ORDER: usize = 30;

/// Per-sample `(w, f(X_T), A, max|V_E|)` for an ensemble, so that every θ
/// and every series coefficient is evaluated on the same paths.
#[derive(Debug, Clone)]
pub struct FeynmanKacTable {
    weights: Vec<f64>,
    values: Vec<Complex64>,
    actions: Vec<f64>,
    c: f64,
    duration: f64,
    m_f: f64,
    run: RunConfig,
}

impl FeynmanKacTable {
    /// `c_bound` is `sup|V_E|`; `None` estimates it as 1.1 × the ensemble maximum.
    pub fn build(ensemble: &Ensemble, f: &Observable, c_bound: Option<f64>) -> Result<Self> {
        Self::build_with(ensemble, f, c_bound, ActionChannel::PotentialOnly)
    }

    pub fn build_with(ensemble: &Ensemble, f: &Observable, c_bound: Option<f64>, channel: ActionChannel) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::NoData);
        }
        let chart = ensemble.sampler().chart();
        let hbar = ensemble.sampler().spec().hbar;
        let rows = ensemble.map(|s| {
            let density = euclidean_density(chart, &s.path, hbar, channel);
            let vmax = density.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok((measure_weight(s), f.on_path(&s.path)?, s.path.grid().trapezoid(&density), vmax))
        })?;
        let duration = ensemble.sampler().grid().duration();
        let c = match c_bound {
            Some(c) => c,
            None => 1.1 * rows.iter().fold(0.0f64, |m, r| m.max(r.3)),
        };
        let limit = c * duration * (1.0 + 1e-9);
        if let Some(bad) = rows.iter().find(|r| r.2.abs() > limit) {
            return Err(Error::BoundViolation { value: bad.2.abs(), bound: c * duration });
        }
        Ok(Self {
            weights: rows.iter().map(|r| r.0).collect(),
            values: rows.iter().map(|r| r.1).collect(),
            actions: rows.iter().map(|r| r.2).collect(),
            c,
            duration,
            m_f: f.bound(),
            run: *ensemble.run(),
        })
    }

    pub fn c_bound(&self) -> f64 {
        self.c
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn mean_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    /// `E[w f(X_T) exp(−θA)]`.
    pub fn expectation(&self, theta: Complex64) -> Result<KernelEstimate> {
        let v: Vec<Complex64> = (0..self.len()).map(|i| self.values[i] * self.weights[i] * (-theta * self.actions[i]).exp()).collect();
        let acc = reduce(&self.run, &v)?;
        let mut est = KernelEstimate::from_accumulator(&acc, "feynman-kac", self.run.seed);
        est.theta = Some(theta);
        Ok(est)
    }

    /// Coefficients `a_n = E[w f(X_T) Aⁿ]`, `n = 0..=order`.
    pub fn series(&self, order: usize) -> Result<ThetaSeries> {
        if order > MAX_SERIES_ORDER {
            return Err(Error::Range(format!("series order {order} exceeds {MAX_SERIES_ORDER}")));
        }
        let mut coefficients = Vec::with_capacity(order + 1);
        let mut std_errors = Vec::with_capacity(order + 1);
        for n in 0..=order {
            let v: Vec<Complex64> = (0..self.len()).map(|i| self.values[i] * self.weights[i] * self.actions[i].powi(n as i32)).collect();
            let acc = reduce(&self.run, &v)?;
            coefficients.push(acc.mean);
            std_errors.push(acc.std_error());
        }
        Ok(ThetaSeries { coefficients, std_errors, m_f: self.m_f, c: self.c, duration: self.duration, mean_weight: self.mean_weight() })
    }

    /// Largest `||exp(iA)| − 1|` over the samples.
    pub fn max_phase_defect(&self) -> f64 {
        self.actions.iter().map(|&a| (Complex64::from_polar(1.0, a).norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSeries {
    pub coefficients: Vec<Complex64>,
    pub std_errors: Vec<f64>,
    pub m_f: f64,
    pub c: f64,
    pub duration: f64,
    /// Mean measure weight (1 for unweighted ensembles).
    pub mean_weight: f64,
}

impl ThetaSeries {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `Σ a_n (−θ)ⁿ/n!`.
    pub fn evaluate(&self, theta: Complex64) -> Complex64 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for (n, a) in self.coefficients.iter().enumerate() {
            if n > 0 {
                term *= -theta / n as f64;
            }
            sum += a * term;
        }
        sum
    }

    /// `M_f W̄ (|θ|CT)^{N+1}/(N+1)! · e^{|θ|CT}` with `W̄` the mean weight.
    pub fn remainder_bound(&self, theta: Complex64) -> f64 {
        let x = theta.norm() * self.c * self.duration;
        let n = self.order() + 1;
        let mut tail = 1.0;
        for k in 1..=n {
            tail *= x / k as f64;
        }
        self.m_f * self.mean_weight * tail * x.exp()
    }

    /// `M_f (CT)ⁿ`.
    pub fn coefficient_bound(&self, n: usize) -> f64 {
        self.m_f * (self.c * self.duration).powi(n as i32)
    }

    /// `|a_n| ≤ M_f (CT)ⁿ (1 + 3·SE_n)`.
    pub fn coefficient_within_bound(&self, n: usize) -> bool {
        self.coefficients[n].norm() <= self.coefficient_bound(n) * (1.0 + 3.0 * self.std_errors[n])
    }
}

/// `u_θ(0, x) = E[f(X_T) exp(−θ∫V_E dt)]` over the ensemble.
pub fn feynman_kac_expectation(ensemble: &Ensemble, f: &Observable, theta: Complex64, c_bound: Option<f64>) -> Result<KernelEstimate> {
    FeynmanKacTable::build(ensemble, f, c_bound)?.expectation(theta)
}

/// Series coefficients `a_0..a_N` of `θ ↦ u_θ` from one ensemble.
pub fn theta_series(ensemble: &Ensemble, f: &Observable, order: usize, c_bound: Option<f64>) -> Result<ThetaSeries> {
    FeynmanKacTable::build(ensemble, f, c_bound)?.series(order)
}

/// `u_θ` at `θ = −i`; every sample weight `exp(iA)` has unit modulus.
pub fn lorentzian_from_theta(ensemble: &Ensemble, f: &Observable, c_bound: Option<f64>) -> Result<KernelEstimate> {
    let table = FeynmanKacTable::build(ensemble, f, c_bound)?;
    let defect = table.max_phase_defect();
    if defect > 1e-12 {
        return Err(Error::Numerical(format!("phase weight deviates from unit modulus by {defect:.3e}")));
    }
    let mut est = table.expectation(Complex64::new(0.0, -1.0))?;
    est.mode = "lorentzian".into();
    Ok(est)
}
