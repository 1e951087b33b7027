//! Independent reference values: closed-form kernels, a backward PDE solver
//! for the Feynman–Kac equation and a brute-force lattice path sum.

mod lattice;
mod pde;

pub use lattice::{lattice_path_sum, transfer_matrix_sum, LatticeMode, LatticeProblem, LatticeSum};
pub use pde::{solve_backward_pde, solve_backward_pde_2d, Boundary, PdeGrid, PdeSolution, PdeSolution2d};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Free diffusion kernel `(2πσ²T)^{−n/2} exp(−|x − y|²/(2σ²T))`, `n = x.len()`.
pub fn heat_kernel(x: &[f64], y: &[f64], duration: f64, sigma: f64) -> f64 {
    let n = x.len() as f64;
    let s2t = sigma * sigma * duration;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (2.0 * PI * s2t).powf(-n / 2.0) * (-d2 / (2.0 * s2t)).exp()
}

pub fn heat_kernel_1d(x: f64, y: f64, duration: f64, sigma: f64) -> f64 {
    heat_kernel(&[x], &[y], duration, sigma)
}

/// Euclidean harmonic-oscillator kernel (unit mass)
/// `(ω/(2πħ sinh ωT))^{1/2} exp(−ω((x² + y²)cosh ωT − 2xy)/(2ħ sinh ωT))`.
pub fn mehler_kernel(x: f64, y: f64, duration: f64, omega: f64, hbar: f64) -> Result<f64> {
    if !(omega > 0.0) || !(duration > 0.0) || !(hbar > 0.0) {
        return Err(Error::Domain(format!("ω, T and ħ must be positive (ω = {omega}, T = {duration}, ħ = {hbar})")));
    }
    let wt = omega * duration;
    if wt > 30.0 {
        return Err(Error::Range(format!("ωT = {wt} exceeds 30")));
    }
    let sh = wt.sinh();
    let pre = (omega / (2.0 * PI * hbar * sh)).sqrt();
    Ok(pre * (-(omega / (2.0 * hbar * sh)) * ((x * x + y * y) * wt.cosh() - 2.0 * x * y)).exp())
}
