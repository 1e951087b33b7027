//! Exhaustive sums over pinned paths on a 1-D lattice, and the same
//! quantity as a product of transfer matrices.

use num_complex::Complex64;

use super::heat_kernel_1d;
use crate::error::{Error, Result};

pub const MAX_SITES: usize = 7;
pub const MAX_STEPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeMode {
    /// Step weight `exp(−𝓥(x_i)Δt)`.
    Euclidean,
    /// Step weight `exp(+i𝓥(x_i)Δt)`.
    Phase,
}

pub struct LatticeProblem<'a> {
    pub sites: Vec<f64>,
    pub steps: usize,
    pub duration: f64,
    pub sigma: f64,
    /// Density 𝓥 (already divided by ħ).
    pub density: &'a dyn Fn(f64) -> f64,
    pub start: usize,
    pub end: usize,
    pub mode: LatticeMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSum {
    /// Σ over paths of Gaussian-step × density weights.
    pub weighted: Complex64,
    /// Same sum with 𝓥 ≡ 0.
    pub free: f64,
    /// Transfer-matrix value of `weighted`.
    pub transfer: Complex64,
}

impl LatticeSum {
    pub fn ratio(&self) -> Complex64 {
        self.weighted / self.free
    }
}

impl LatticeProblem<'_> {
    fn validate(&self) -> Result<()> {
        let j = self.sites.len();
        if j == 0 || j > MAX_SITES || self.steps == 0 || self.steps > MAX_STEPS {
            return Err(Error::Size(format!("need 1 ≤ J ≤ {MAX_SITES} and 1 ≤ K ≤ {MAX_STEPS}, got J = {j}, K = {}", self.steps)));
        }
        if self.start >= j || self.end >= j {
            return Err(Error::Domain("endpoint index outside the lattice".into()));
        }
        if !(self.duration > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Domain("duration and sigma must be positive".into()));
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.duration / self.steps as f64
    }

    fn step(&self, from: usize, to: usize, with_density: bool) -> Complex64 {
        let dt = self.dt();
        let k = heat_kernel_1d(self.sites[from], self.sites[to], dt, self.sigma);
        if !with_density {
            return Complex64::new(k, 0.0);
        }
        let v = (self.density)(self.sites[from]) * dt;
        match self.mode {
            LatticeMode::Euclidean => Complex64::new(k * (-v).exp(), 0.0),
            LatticeMode::Phase => Complex64::from_polar(k, v),
        }
    }
}

/// Brute-force enumeration of all `J^{K−1}` pinned paths; also evaluates
/// [`transfer_matrix_sum`] and fails if the two differ by more than 1e-12
/// (relative).
pub fn lattice_path_sum(problem: &LatticeProblem) -> Result<LatticeSum> {
    problem.validate()?;
    let j = problem.sites.len();
    let inner = problem.steps - 1;
    let total = j.pow(inner as u32);
    let mut weighted = Complex64::new(0.0, 0.0);
    let mut free = 0.0;
    let mut path = vec![0usize; problem.steps + 1];
    for code in 0..total {
        let mut c = code;
        path[0] = problem.start;
        for slot in path.iter_mut().skip(1).take(inner) {
            *slot = c % j;
            c /= j;
        }
        path[problem.steps] = problem.end;
        let mut w = Complex64::new(1.0, 0.0);
        let mut w0 = 1.0;
        for s in 0..problem.steps {
            w *= problem.step(path[s], path[s + 1], true);
            w0 *= problem.step(path[s], path[s + 1], false).re;
        }
        weighted += w;
        free += w0;
    }
    let transfer = transfer_matrix_sum(problem)?;
    let scale = transfer.norm().max(f64::MIN_POSITIVE);
    if (weighted - transfer).norm() > 1e-12 * scale {
        return Err(Error::Numerical(format!("path sum {weighted} disagrees with transfer product {transfer}")));
    }
    Ok(LatticeSum { weighted, free, transfer })
}

/// `e_startᵀ M^K e_end` with `M_ab = k(x_a, x_b)·w(x_a)`.
pub fn transfer_matrix_sum(problem: &LatticeProblem) -> Result<Complex64> {
    problem.validate()?;
    let j = problem.sites.len();
    let mut row = vec![Complex64::new(0.0, 0.0); j];
    row[problem.start] = Complex64::new(1.0, 0.0);
    for _ in 0..problem.steps {
        let mut next = vec![Complex64::new(0.0, 0.0); j];
        for (a, ra) in row.iter().enumerate() {
            for (b, nb) in next.iter_mut().enumerate() {
                *nb += ra * problem.step(a, b, true);
            }
        }
        row = next;
    }
    Ok(row[problem.end])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem<'a>(j: usize, k: usize, density: &'a dyn Fn(f64) -> f64, mode: LatticeMode) -> LatticeProblem<'a> {
        let sites = (0..j).map(|i| -1.0 + 2.0 * i as f64 / (j - 1).max(1) as f64).collect();
        LatticeProblem { sites, steps: k, duration: 1.0, sigma: 1.0, density, start: 0, end: j / 2, mode }
    }

    #[test]
    fn free_ratio_is_one() {
        let zero = |_: f64| 0.0;
        let s = lattice_path_sum(&problem(5, 4, &zero, LatticeMode::Euclidean)).unwrap();
        assert_eq!(s.ratio(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn single_step_is_kernel_entry() {
        let v = |x: f64| 0.5 * x * x;
        let p = problem(5, 1, &v, LatticeMode::Euclidean);
        let s = lattice_path_sum(&p).unwrap();
        let want = heat_kernel_1d(p.sites[0], p.sites[2], 1.0, 1.0) * (-0.5f64).exp();
        assert!((s.weighted.re - want).abs() < 1e-15);
    }

    #[test]
    fn brute_force_matches_transfer_product() {
        let v = |x: f64| 0.5 * x * x;
        for mode in [LatticeMode::Euclidean, LatticeMode::Phase] {
            for j in 1..=7 {
                for k in 1..=6 {
                    let s = lattice_path_sum(&problem(j, k, &v, mode)).unwrap();
                    assert!((s.weighted - s.transfer).norm() <= 1e-12 * s.transfer.norm());
                }
            }
        }
    }

    #[test]
    fn rejects_large_instances() {
        let v = |_: f64| 0.0;
        assert!(matches!(lattice_path_sum(&problem(8, 3, &v, LatticeMode::Euclidean)), Err(Error::Size(_))));
        assert!(matches!(lattice_path_sum(&problem(3, 7, &v, LatticeMode::Euclidean)), Err(Error::Size(_))));
    }
}
