use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{measure_weight, reduce, KernelEstimate, Observable};
use crate::ensemble::{aux_rng, Ensemble};
use crate::error::{Error, Result};

/// Random-stream purpose tag for the time draws.
const TIME_DRAW: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disintegration {
    /// Monte Carlo over (sample, t ~ ρ̄).
    pub lhs: KernelEstimate,
    /// `Σ_k ρ̄_k E_μ[F(X_{t_k}, t_k)]`.
    pub rhs: KernelEstimate,
    pub gap: f64,
    pub combined_se: f64,
}

/// Compares the bundle-measure integral of `F` with its time
/// disintegration. `rho` is a probability vector over the grid nodes.
pub fn disintegration_check(ensemble: &Ensemble, observable: &Observable, rho: &[f64]) -> Result<Disintegration> {
    if ensemble.is_empty() {
        return Err(Error::NoData);
    }
    let grid = ensemble.sampler().grid().clone();
    if rho.len() != grid.len() {
        return Err(Error::Shape(format!("{} time weights for {} grid nodes", rho.len(), grid.len())));
    }
    let total: f64 = rho.iter().sum();
    if rho.iter().any(|r| !(*r >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::Weights(total));
    }
    let picker = WeightedIndex::new(rho).map_err(|_| Error::Weights(total))?;
    let traj = ensemble.sampler().trajectory();
    let seed = ensemble.run().seed;
    let rows = ensemble.map(|s| {
        let w = measure_weight(s);
        let fiber = |k: usize| -> Result<Complex64> {
            let x: Vec<f64> = s.path.point(k).iter().zip(traj.points[k].iter()).map(|(a, b)| a - b).collect();
            observable.on_fiber(&x, grid.times()[k])
        };
        let k = picker.sample(&mut aux_rng(seed, s.index as u64, TIME_DRAW));
        let lhs = fiber(k)? * w;
        let mut rhs = Complex64::new(0.0, 0.0);
        for (j, &r) in rho.iter().enumerate() {
            if r > 0.0 {
                rhs += fiber(j)? * r;
            }
        }
        Ok([lhs, rhs * w])
    })?;
    let run = ensemble.run();
    let l = reduce(run, &rows.iter().map(|r| r[0]).collect::<Vec<_>>())?;
    let r = reduce(run, &rows.iter().map(|r| r[1]).collect::<Vec<_>>())?;
    let lhs = KernelEstimate::from_accumulator(&l, "fiber", seed);
    let rhs = KernelEstimate::from_accumulator(&r, "fiber", seed);
    let gap = (lhs.value - rhs.value).norm();
    let combined_se = lhs.std_error.hypot(rhs.std_error);
    Ok(Disintegration { lhs, rhs, gap, combined_se })
}
